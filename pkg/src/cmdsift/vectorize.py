"""Command line -> fixed-width feature vector.

Tokenize, collapse IPs and numbers into placeholders, then hash word n-grams
into a fixed number of buckets. The whole transform is deterministic across
processes and platforms: the hash is seeded blake2b, never Python's hash().
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import sparse

IP_PLACEHOLDER = "<IP>"
NUM_PLACEHOLDER = "<NUM>"

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_PUNCT_RE = re.compile(r"[^A-Za-z0-9_]+")
# Dotted and colon forms would otherwise shatter at punctuation boundaries;
# they are carved out first so placeholder substitution can see them whole.
_IPV4_RE = re.compile(r"\d{1,3}(?:\.\d{1,3}){3}")
_REAL_RE = re.compile(r"\d+\.\d+")
_IPV6_CAND_RE = re.compile(r"[0-9A-Fa-f:]+")

_IPV4_FULL = re.compile(r"\d{1,3}(?:\.\d{1,3}){3}$")
_REAL_FULL = re.compile(r"\d+(?:\.\d+)?$")
_HEX_FULL = re.compile(r"0[xX][0-9A-Fa-f]+$")


def _ipv6_like(text: str) -> bool:
    # Colon-hex with at least two colons and at least one hex digit.
    if text.count(":") < 2:
        return False
    return any(c in "0123456789abcdefABCDEF" for c in text)


def tokenize(command_line: str) -> list[str]:
    """Split a command line into lowercased word and punctuation-run tokens."""
    tokens: list[str] = []
    for chunk in command_line.split():
        i = 0
        n = len(chunk)
        while i < n:
            m = _IPV4_RE.match(chunk, i)
            if m and (m.end() == n or not chunk[m.end()].isalnum()):
                tokens.append(m.group())
                i = m.end()
                continue
            m = _IPV6_CAND_RE.match(chunk, i)
            if (
                m
                and _ipv6_like(m.group())
                and (m.end() == n or not (chunk[m.end()].isalnum() or chunk[m.end()] == "_"))
            ):
                tokens.append(m.group().lower())
                i = m.end()
                continue
            m = _REAL_RE.match(chunk, i)
            if m and (m.end() == n or not chunk[m.end()].isalnum()):
                tokens.append(m.group())
                i = m.end()
                continue
            m = _WORD_RE.match(chunk, i)
            if m:
                tokens.append(m.group().lower())
                i = m.end()
                continue
            m = _PUNCT_RE.match(chunk, i)
            # Punctuation runs stay whole (">&" is one token) but stop where a
            # carved-out numeric form begins.
            end = m.end()
            for j in range(i + 1, end):
                if _IPV4_RE.match(chunk, j) or _REAL_RE.match(chunk, j):
                    end = j
                    break
            tokens.append(chunk[i:end])
            i = end
    return tokens


def substitute_placeholders(tokens: list[str]) -> list[str]:
    """Replace IP-shaped tokens with <IP> and numeric literals with <NUM>."""
    out = []
    for tok in tokens:
        if _IPV4_FULL.fullmatch(tok) or _ipv6_like(tok) and _IPV6_CAND_RE.fullmatch(tok):
            out.append(IP_PLACEHOLDER)
        elif _HEX_FULL.fullmatch(tok) or _REAL_FULL.fullmatch(tok):
            out.append(NUM_PLACEHOLDER)
        else:
            out.append(tok)
    return out


@dataclass(frozen=True)
class VectorizerConfig:
    ngram_min: int = 1
    ngram_max: int = 3
    dimensions: int = 2**18
    hash_seed: int = 0x5EED_CAFE
    normalize: str = "l2"  # "l2" or "none"

    def __post_init__(self):
        if self.ngram_min < 1 or self.ngram_max < self.ngram_min:
            raise ValueError("require 1 <= ngram_min <= ngram_max")
        if self.dimensions & (self.dimensions - 1) or not (2**10 <= self.dimensions <= 2**24):
            raise ValueError("dimensions must be a power of two in [2^10, 2^24]")
        if self.normalize not in ("l2", "none"):
            raise ValueError(f"unknown normalize mode {self.normalize!r}")

    def to_dict(self) -> dict[str, str]:
        return {
            "ngram_min": str(self.ngram_min),
            "ngram_max": str(self.ngram_max),
            "dimensions": str(self.dimensions),
            "hash_seed": str(self.hash_seed),
            "normalize": self.normalize,
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "VectorizerConfig":
        return cls(
            ngram_min=int(d["ngram_min"]),
            ngram_max=int(d["ngram_max"]),
            dimensions=int(d["dimensions"]),
            hash_seed=int(d["hash_seed"]),
            normalize=d["normalize"],
        )


def _hash_ngram(ngram: tuple[str, ...], seed: int) -> int:
    key = (seed & 0xFFFF_FFFF_FFFF_FFFF).to_bytes(8, "little")
    data = "\x1f".join(ngram).encode("utf-8")
    digest = hashlib.blake2b(data, digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse non-negative feature vector of fixed width."""

    dimensions: int
    indices: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dimensions)
        dense[list(self.indices)] = self.values
        return dense

    def nonzero(self) -> list[tuple[int, float]]:
        return list(zip(self.indices, self.values))


def ngrams(tokens: list[str], n_min: int, n_max: int) -> Iterable[tuple[str, ...]]:
    for n in range(n_min, n_max + 1):
        for i in range(len(tokens) - n + 1):
            yield tuple(tokens[i : i + n])


def vectorize(config: VectorizerConfig, command_line: str) -> FeatureVector:
    tokens = substitute_placeholders(tokenize(command_line))
    counts: dict[int, float] = {}
    mask = config.dimensions - 1
    for gram in ngrams(tokens, config.ngram_min, config.ngram_max):
        idx = _hash_ngram(gram, config.hash_seed) & mask
        counts[idx] = counts.get(idx, 0.0) + 1.0
    if config.normalize == "l2" and counts:
        norm = math.sqrt(sum(v * v for v in counts.values()))
        counts = {k: v / norm for k, v in counts.items()}
    items = sorted(counts.items())
    return FeatureVector(
        dimensions=config.dimensions,
        indices=tuple(k for k, _ in items),
        values=tuple(v for _, v in items),
    )


def to_csr(vectors: list[FeatureVector]) -> sparse.csr_matrix:
    """Stack feature vectors into one CSR matrix for batch training/scoring."""
    if not vectors:
        raise ValueError("no vectors to stack")
    dims = vectors[0].dimensions
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for v in vectors:
        if v.dimensions != dims:
            raise ValueError("mixed vector widths")
        indices.extend(v.indices)
        data.extend(v.values)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), dims),
    )


def template_key(command_line: str) -> str:
    """Placeholder-substituted token sequence; identifies 'the same' command
    across literal IP/port variations."""
    return "\x1f".join(substitute_placeholders(tokenize(command_line)))
