"""Tokenization shared by the stats and merge-candidate code."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

_SPLIT = re.compile(r"[^0-9a-z]+")


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = (resources.files("interrvos") / "data" / "stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w.strip() for w in text.split() if w.strip())


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empties."""
    return [t for t in _SPLIT.split(text.lower()) if t]


def content_tokens(text: str) -> list[str]:
    stop = stopwords()
    return [t for t in tokenize(text) if t not in stop]
