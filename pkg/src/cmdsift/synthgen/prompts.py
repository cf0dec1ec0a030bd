"""Prompt template loading. Templates are plain text files with {field}
placeholders, shipped with the package and overridable per state directory
so analysts can tune wording without touching code."""

from __future__ import annotations

import string
from functools import lru_cache
from pathlib import Path
from typing import Optional

from cmdsift.fixtures import data_path

_override_dir: Optional[Path] = None


def set_override_dir(path: Optional[str]) -> None:
    global _override_dir
    _override_dir = Path(path) if path else None
    _load.cache_clear()


@lru_cache(maxsize=None)
def _load(name: str) -> str:
    if _override_dir is not None:
        candidate = _override_dir / f"{name}.txt"
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    return data_path("prompts", f"{name}.txt").read_text(encoding="utf-8")


class _Formatter(string.Formatter):
    def get_value(self, key, args, kwargs):
        if isinstance(key, str) and key not in kwargs:
            return ""
        return super().get_value(key, args, kwargs)


_formatter = _Formatter()


def render(name: str, **fields) -> str:
    return _formatter.vformat(_load(name), (), fields)
