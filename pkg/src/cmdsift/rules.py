"""Loose-rule language: parse, compile, and evaluate over command lines.

The grammar is a deliberately small YARA-style subset: regex string
definitions with nocase/ascii/wide modifiers and an and/or condition over
string identifiers. Patterns are restricted to constructs that match in
time linear in the input (no back-references, no lookaround).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

from cmdsift.core import Event

MODIFIERS = ("nocase", "ascii", "wide")


class RuleSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class RuleCompileError(ValueError):
    """Pattern uses a construct outside the supported regex subset."""


# --- condition expression tree ---------------------------------------------


@dataclass(frozen=True)
class StringRef:
    name: str


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Or:
    parts: tuple


ConditionNode = Union[StringRef, And, Or]


def eval_condition(node: ConditionNode, hits: set[str]) -> bool:
    if isinstance(node, StringRef):
        return node.name in hits
    if isinstance(node, And):
        return all(eval_condition(p, hits) for p in node.parts)
    if isinstance(node, Or):
        return any(eval_condition(p, hits) for p in node.parts)
    raise TypeError(f"unknown condition node {node!r}")


def condition_string_refs(node: ConditionNode) -> set[str]:
    if isinstance(node, StringRef):
        return {node.name}
    refs: set[str] = set()
    for p in node.parts:
        refs |= condition_string_refs(p)
    return refs


@dataclass(frozen=True)
class StringDef:
    id: str
    pattern: str
    modifiers: frozenset[str] = frozenset()


@dataclass(frozen=True)
class RuleAst:
    name: str
    meta: dict[str, str]
    strings: tuple[StringDef, ...]
    condition: ConditionNode


# --- scanner ----------------------------------------------------------------


@dataclass
class _Token:
    kind: str  # ident, string_id, regex, string, punct
    value: str
    line: int
    col: int


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_STRING_ID_RE = re.compile(r"\$[A-Za-z][A-Za-z0-9_]*")


def _scan(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(source)

    def err(msg: str):
        raise RuleSyntaxError(msg, line, col)

    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch == "/":
            # regex literal: scan to the next unescaped '/'
            j = i + 1
            buf = []
            while j < n:
                c = source[j]
                if c == "\\" and j + 1 < n:
                    buf.append(source[j : j + 2])
                    j += 2
                    continue
                if c == "/":
                    break
                if c == "\n":
                    err("unterminated regex literal")
                buf.append(c)
                j += 1
            if j >= n:
                err("unterminated regex literal")
            tokens.append(_Token("regex", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == '"':
            j = i + 1
            buf = []
            while j < n and source[j] != '"':
                if source[j] == "\\" and j + 1 < n:
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(source[j + 1], source[j + 1]))
                    j += 2
                    continue
                if source[j] == "\n":
                    err("unterminated string literal")
                buf.append(source[j])
                j += 1
            if j >= n:
                err("unterminated string literal")
            tokens.append(_Token("string", "".join(buf), start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch == "$":
            m = _STRING_ID_RE.match(source, i)
            if not m:
                err("malformed string identifier")
            tokens.append(_Token("string_id", m.group(), start_line, start_col))
            col += m.end() - i
            i = m.end()
            continue
        m = _IDENT_RE.match(source, i)
        if m:
            tokens.append(_Token("ident", m.group(), start_line, start_col))
            col += m.end() - i
            i = m.end()
            continue
        if ch in "{}():=":
            tokens.append(_Token("punct", ch, start_line, start_col))
            i += 1
            col += 1
            continue
        err(f"unexpected character {ch!r}")
    return tokens


# --- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def _peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("punct", "", 1, 1)
            raise RuleSyntaxError("unexpected end of input", last.line, last.col)
        self.pos += 1
        return tok

    def _expect(self, kind: str, value: Optional[str] = None) -> _Token:
        tok = self._next()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value or kind
            raise RuleSyntaxError(f"expected {want!r}, got {tok.value!r}", tok.line, tok.col)
        return tok

    def parse_rules(self) -> list[RuleAst]:
        rules = []
        while self._peek() is not None:
            rules.append(self.parse_rule())
        if not rules:
            raise RuleSyntaxError("no rules found", 1, 1)
        return rules

    def parse_rule(self) -> RuleAst:
        self._expect("ident", "rule")
        name_tok = self._expect("ident")
        self._expect("punct", "{")
        meta: dict[str, str] = {}
        tok = self._peek()
        if tok and tok.kind == "ident" and tok.value == "meta":
            self._next()
            self._expect("punct", ":")
            meta = self._parse_meta()
        strings_tok = self._expect("ident")
        if strings_tok.value != "strings":
            raise RuleSyntaxError(
                f"expected 'strings', got {strings_tok.value!r}", strings_tok.line, strings_tok.col
            )
        self._expect("punct", ":")
        strings = self._parse_strings()
        cond_tok = self._expect("ident")
        if cond_tok.value != "condition":
            raise RuleSyntaxError(
                f"expected 'condition', got {cond_tok.value!r}", cond_tok.line, cond_tok.col
            )
        self._expect("punct", ":")
        condition = self._parse_or()
        self._expect("punct", "}")

        if not strings:
            raise RuleSyntaxError("empty strings section", cond_tok.line, cond_tok.col)
        declared = {s.id for s in strings}
        for ref in sorted(condition_string_refs(condition)):
            if ref not in declared:
                raise RuleSyntaxError(
                    f"condition references undeclared string {ref}", cond_tok.line, cond_tok.col
                )
        return RuleAst(name=name_tok.value, meta=meta, strings=tuple(strings), condition=condition)

    def _parse_meta(self) -> dict[str, str]:
        meta: dict[str, str] = {}
        while True:
            tok = self._peek()
            if tok is None or tok.kind != "ident" or tok.value in ("strings", "condition"):
                return meta
            key = self._next().value
            self._expect("punct", "=")
            val = self._expect("string")
            meta[key] = val.value

    def _parse_strings(self) -> list[StringDef]:
        strings: list[StringDef] = []
        seen: set[str] = set()
        while True:
            tok = self._peek()
            if tok is None or tok.kind != "string_id":
                return strings
            sid_tok = self._next()
            if sid_tok.value in seen:
                raise RuleSyntaxError(
                    f"duplicate string id {sid_tok.value}", sid_tok.line, sid_tok.col
                )
            seen.add(sid_tok.value)
            self._expect("punct", "=")
            pattern = self._expect("regex")
            mods: set[str] = set()
            while True:
                nxt = self._peek()
                if nxt and nxt.kind == "ident" and nxt.value in MODIFIERS:
                    mods.add(self._next().value)
                else:
                    break
            strings.append(
                StringDef(id=sid_tok.value, pattern=pattern.value, modifiers=frozenset(mods))
            )

    def _parse_or(self) -> ConditionNode:
        parts = [self._parse_and()]
        while True:
            tok = self._peek()
            if tok and tok.kind == "ident" and tok.value == "or":
                self._next()
                parts.append(self._parse_and())
            else:
                break
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def _parse_and(self) -> ConditionNode:
        parts = [self._parse_factor()]
        while True:
            tok = self._peek()
            if tok and tok.kind == "ident" and tok.value == "and":
                self._next()
                parts.append(self._parse_factor())
            else:
                break
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def _parse_factor(self) -> ConditionNode:
        tok = self._next()
        if tok.kind == "string_id":
            return StringRef(tok.value)
        if tok.kind == "punct" and tok.value == "(":
            inner = self._parse_or()
            self._expect("punct", ")")
            return inner
        raise RuleSyntaxError(f"expected string id or '(', got {tok.value!r}", tok.line, tok.col)


def parse_rule(source: str) -> RuleAst:
    """Parse a single rule definition."""
    rules = _Parser(_scan(source)).parse_rules()
    if len(rules) != 1:
        raise RuleSyntaxError(f"expected exactly one rule, found {len(rules)}", 1, 1)
    return rules[0]


def parse_rule_file(source: str) -> list[RuleAst]:
    return _Parser(_scan(source)).parse_rules()


# --- regex subset validation and the wide transform -------------------------

_REJECTED_CONSTRUCTS = [
    (re.compile(r"\(\?="), "lookahead (?=...)"),
    (re.compile(r"\(\?!"), "negative lookahead (?!...)"),
    (re.compile(r"\(\?<="), "lookbehind (?<=...)"),
    (re.compile(r"\(\?<!"), "negative lookbehind (?<!...)"),
    (re.compile(r"\(\?P="), "named back-reference (?P=...)"),
    (re.compile(r"\(\?\("), "conditional group (?(...)"),
]
_BACKREF_RE = re.compile(r"\\[1-9]")


def check_pattern_subset(pattern: str) -> None:
    """Reject constructs the matcher cannot run in linear time."""
    # Escapes inside character classes are literal; scan outside classes only.
    outside = re.sub(r"\[(?:\\.|[^\]])*\]", "[]", pattern)
    m = _BACKREF_RE.search(outside)
    if m:
        raise RuleCompileError(f"back-reference {m.group()!r} is not supported")
    for probe, name in _REJECTED_CONSTRUCTS:
        if probe.search(outside):
            raise RuleCompileError(f"{name} is not supported")


_ZERO_WIDTH_ESCAPES = set("bBAZ")
_NUL = r"\x00"


def wide_pattern(pattern: str) -> str:
    """Rewrite a pattern so every matched character must be followed by a zero
    byte, i.e. the pattern's UTF-16LE ("wide") encoding form."""
    out, pos = _wide_seq(pattern, 0, top=True)
    if pos != len(pattern):
        raise RuleCompileError(f"unbalanced ')' at position {pos} in /{pattern}/")
    return out


def _wide_seq(src: str, pos: int, top: bool = False) -> tuple[str, int]:
    branches: list[str] = []
    current: list[str] = []
    n = len(src)
    while pos < n:
        ch = src[pos]
        if ch == ")":
            if top:
                raise RuleCompileError(f"unbalanced ')' at position {pos} in /{src}/")
            break
        if ch == "|":
            branches.append("".join(current))
            current = []
            pos += 1
            continue
        atom, needs_nul, pos = _wide_atom(src, pos)
        quant = ""
        if pos < n and src[pos] in "*+?{":
            quant, pos = _scan_quantifier(src, pos)
        if not needs_nul:
            # Zero-width atoms and groups (whose contents are already wide).
            current.append(atom + quant)
        elif quant:
            current.append(f"(?:{atom}{_NUL}){quant}")
        else:
            current.append(atom + _NUL)
    branches.append("".join(current))
    return "|".join(branches) if len(branches) > 1 else branches[0], pos


def _wide_atom(src: str, pos: int) -> tuple[str, bool, int]:
    """Returns (transformed atom, needs trailing NUL, next position)."""
    ch = src[pos]
    if ch == "(":
        prefix = "("
        pos += 1
        if src.startswith("?:", pos):
            prefix += "?:"
            pos += 2
        inner, pos = _wide_seq(src, pos)
        if pos >= len(src) or src[pos] != ")":
            raise RuleCompileError(f"unterminated group in /{src}/")
        # Group contents are already wide; no extra NUL after the group.
        return prefix + inner + ")", False, pos + 1
    if ch == "[":
        j = pos + 1
        if j < len(src) and src[j] == "^":
            j += 1
        if j < len(src) and src[j] == "]":
            j += 1
        while j < len(src) and src[j] != "]":
            j += 2 if src[j] == "\\" else 1
        if j >= len(src):
            raise RuleCompileError(f"unterminated character class in /{src}/")
        return src[pos : j + 1], True, j + 1
    if ch == "\\":
        if pos + 1 >= len(src):
            raise RuleCompileError(f"dangling backslash in /{src}/")
        esc = src[pos + 1]
        if esc == "x" and pos + 3 < len(src):
            return src[pos : pos + 4], True, pos + 4
        return src[pos : pos + 2], esc not in _ZERO_WIDTH_ESCAPES, pos + 2
    if ch in "^$":
        return ch, False, pos + 1
    return ch, True, pos + 1


def _scan_quantifier(src: str, pos: int) -> tuple[str, int]:
    ch = src[pos]
    if ch in "*+?":
        end = pos + 1
    else:  # '{'
        end = src.find("}", pos)
        if end < 0:
            raise RuleCompileError(f"unterminated quantifier in /{src}/")
        end += 1
    if end < len(src) and src[end] == "?":
        end += 1
    return src[pos:end], end


# --- compiled rules ----------------------------------------------------------


@dataclass(frozen=True)
class CompiledString:
    id: str
    matchers: tuple[re.Pattern, ...]

    def search(self, text: str) -> Optional[tuple[int, int]]:
        for rx in self.matchers:
            m = rx.search(text)
            if m:
                return m.span()
        return None


@dataclass(frozen=True)
class CompiledRule:
    ast: RuleAst
    strings: tuple[CompiledString, ...]

    @property
    def name(self) -> str:
        return self.ast.name


@dataclass(frozen=True)
class EvalResult:
    matched: bool
    matched_ids: tuple[str, ...]
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)


def compile_rule(ast: RuleAst) -> CompiledRule:
    compiled: list[CompiledString] = []
    for sdef in ast.strings:
        check_pattern_subset(sdef.pattern)
        flags = re.IGNORECASE if "nocase" in sdef.modifiers else 0
        sources: list[str] = []
        wide_only = "wide" in sdef.modifiers and "ascii" not in sdef.modifiers
        if not wide_only:
            sources.append(sdef.pattern)
        if "wide" in sdef.modifiers:
            sources.append(wide_pattern(sdef.pattern))
        matchers = []
        for src in sources:
            try:
                matchers.append(re.compile(src, flags))
            except re.error as exc:
                raise RuleCompileError(f"pattern /{sdef.pattern}/ does not compile: {exc}") from exc
        compiled.append(CompiledString(id=sdef.id, matchers=tuple(matchers)))
    return CompiledRule(ast=ast, strings=tuple(compiled))


def evaluate(rule: CompiledRule, command_line: str) -> EvalResult:
    """Evaluate the rule condition over per-string hits; returns matched ids
    (and their first-match spans) for ticket enrichment."""
    hits: set[str] = set()
    spans: dict[str, tuple[int, int]] = {}
    for cs in rule.strings:
        span = cs.search(command_line)
        if span is not None:
            hits.add(cs.id)
            spans[cs.id] = span
    matched = eval_condition(rule.ast.condition, hits)
    return EvalResult(matched=matched, matched_ids=tuple(sorted(hits)), spans=spans)


@dataclass(frozen=True)
class FilterHit:
    event: Event
    rule_name: str
    matched_ids: tuple[str, ...]
    spans: dict[str, tuple[int, int]]


def filter_stream(rules: list[CompiledRule], events: Iterable[Event]) -> Iterator[FilterHit]:
    """Emit events matching at least one rule, in input order. The first
    matching rule names the detection."""
    if not rules:
        raise ValueError("at least one rule required")
    for event in events:
        for rule in rules:
            result = evaluate(rule, event.command_line)
            if result.matched:
                yield FilterHit(
                    event=event,
                    rule_name=rule.name,
                    matched_ids=result.matched_ids,
                    spans=result.spans,
                )
                break


def load_rules(path: str) -> list[CompiledRule]:
    """Load compiled rules from a .yar file or a directory of them."""
    paths: list[str]
    if os.path.isdir(path):
        paths = sorted(
            os.path.join(path, f) for f in os.listdir(path) if f.endswith(".yar")
        )
    else:
        paths = [path]
    rules: list[CompiledRule] = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            for ast in parse_rule_file(fh.read()):
                rules.append(compile_rule(ast))
    if not rules:
        raise ValueError(f"no rules found under {path}")
    return rules
