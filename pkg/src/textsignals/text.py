"""Tokenization shared by the summarizer and the lexical classifier."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources

STOPWORDS_VERSION = "en-179"

_SPLIT_RE = re.compile(r"[^0-9a-z]+")


def _data_lines(name: str) -> list[str]:
    text = resources.files("textsignals").joinpath(f"data/{name}").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]


@lru_cache(maxsize=None)
def stopwords() -> frozenset[str]:
    return frozenset(_data_lines("stopwords_en.txt"))


@lru_cache(maxsize=None)
def abbreviations() -> frozenset[str]:
    return frozenset(_data_lines("abbreviations_en.txt"))


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop 1-char tokens and stopwords."""
    stop = stopwords()
    return [tok for tok in _SPLIT_RE.split(text.lower()) if len(tok) >= 2 and tok not in stop]
