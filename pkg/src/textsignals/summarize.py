"""Extractive centroid summarization of a day's bucket of documents.

Sentences are tf-idf vectors (raw term counts, ``idf = ln((N+1)/(df+1)) + 1``
over the N sentences of the bucket), L2-normalized. Sentences are picked
greedily by cosine similarity to the normalized mean vector, skipping any
candidate whose cosine to an already picked sentence reaches the
redundancy threshold.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .core import Document
from .text import abbreviations, tokenize

DEFAULT_SENTENCES = 5
REDUNDANCY_THRESHOLD = 0.6

_BOUNDARY_RE = re.compile(r"[.?!][\"')\]]*\s+(?=[\"'(\[]?[A-Z])")


def split_sentences(text: str, guard_initials: bool = True) -> list[str]:
    """Rule-based sentence splitter.

    Splits after ``.?!`` followed by whitespace and a capital letter, unless
    the period closes a known abbreviation or (with ``guard_initials``) a
    single capital initial such as ``J.``.
    """
    if not text or not text.strip():
        return []
    abbrevs = abbreviations()
    sentences = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        end = match.start() + 1
        chunk = text[start:end]
        if text[match.start()] == ".":
            last_word = chunk.split()[-1] if chunk.split() else ""
            if last_word.lower() in abbrevs:
                continue
            if guard_initials and re.fullmatch(r"[A-Z]\.", last_word):
                continue
        closing = len(match.group(0).rstrip()) - 1
        sentences.append(text[start:end + closing].strip())
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return [s for s in sentences if s]


@dataclass(frozen=True)
class SentenceVector:
    sentence_index: int
    weights: dict[str, float]

    def dot(self, other: SentenceVector | dict[str, float]) -> float:
        w = other.weights if isinstance(other, SentenceVector) else other
        a, b = (self.weights, w) if len(self.weights) <= len(w) else (w, self.weights)
        return sum(v * b.get(k, 0.0) for k, v in a.items())


def _normalize(weights: dict[str, float]) -> dict[str, float]:
    norm = math.sqrt(sum(v * v for v in weights.values()))
    if norm == 0.0:
        return {}
    return {k: v / norm for k, v in weights.items()}


def tfidf_vectors(sentences: Sequence[str]) -> list[SentenceVector]:
    counts = [Counter(tokenize(s)) for s in sentences]
    n = len(sentences)
    df = Counter(tok for c in counts for tok in c)
    idf = {tok: math.log((n + 1) / (d + 1)) + 1.0 for tok, d in df.items()}
    return [
        SentenceVector(i, _normalize({tok: tf * idf[tok] for tok, tf in c.items()}))
        for i, c in enumerate(counts)
    ]


def centroid(vectors: Sequence[SentenceVector]) -> dict[str, float]:
    total: dict[str, float] = {}
    for v in vectors:
        for k, w in v.weights.items():
            total[k] = total.get(k, 0.0) + w
    return _normalize({k: w / len(vectors) for k, w in total.items()})


def document_sentences(docs: Sequence[Document]) -> list[str]:
    """Titles count as sentences of their own, followed by the split body."""
    sentences = []
    for doc in docs:
        if doc.title and doc.title.strip():
            sentences.append(doc.title.strip())
        if doc.body:
            sentences.extend(split_sentences(doc.body))
    return sentences


def select_sentences(sentences: Sequence[str], k: int = DEFAULT_SENTENCES,
                     redundancy_threshold: float = REDUNDANCY_THRESHOLD) -> list[int]:
    """Indices of the selected sentences, in selection order."""
    if not sentences:
        raise ValueError("no sentences to summarize")
    vectors = tfidf_vectors(sentences)
    center = centroid(vectors)
    scored = [(v.dot(center), v.sentence_index) for v in vectors if v.weights]
    # highest similarity first, lower index on ties; rounding keeps
    # mathematically equal scores tied despite summation-order noise
    scored.sort(key=lambda t: (-round(t[0], 12), t[1]))
    chosen: list[int] = []
    for _, idx in scored:
        if len(chosen) >= k:
            break
        if any(vectors[idx].dot(vectors[j]) >= redundancy_threshold for j in chosen):
            continue
        chosen.append(idx)
    return chosen


def centroid_select(docs: Sequence[Document], k: int = DEFAULT_SENTENCES,
                    redundancy_threshold: float = REDUNDANCY_THRESHOLD) -> list[str]:
    sentences = document_sentences(docs)
    if not sentences:
        raise ValueError("documents contain no sentences")
    return [sentences[i] for i in select_sentences(sentences, k, redundancy_threshold)]
