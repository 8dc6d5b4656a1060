"""Binary bag-of-words features over a document-frequency vocabulary."""
from __future__ import annotations

import datetime as dt
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ..text import STOPWORDS_VERSION, tokenize
from .examples import TaskError, TaskExample, TaskSplits

DEFAULT_VOCAB_SIZE = 10_000


@dataclass
class Vocabulary:
    tokens: list[str]
    # what the vocabulary was fitted on; checked by audit_vocabulary
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise TaskError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def to_dict(self) -> dict:
        return {"tokens": list(self.tokens), "provenance": self.provenance, "stopwords": STOPWORDS_VERSION}

    @classmethod
    def from_dict(cls, d: dict) -> Vocabulary:
        return cls(list(d["tokens"]), dict(d.get("provenance", {})))


@dataclass(frozen=True)
class SparseBinaryVector:
    on_indices: tuple[int, ...]


def build_vocab(texts: Iterable[str], size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Top ``size`` tokens by document frequency; ties break alphabetically."""
    df: Counter[str] = Counter()
    n_texts = 0
    for text in texts:
        n_texts += 1
        df.update(set(tokenize(text)))
    if n_texts == 0:
        raise TaskError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:size]
    return Vocabulary([tok for tok, _ in ranked], {"n_texts": n_texts})


def build_vocab_from_examples(examples: Sequence[TaskExample], size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    vocab = build_vocab((e.text for e in examples), size)
    if examples:
        vocab.provenance["first_tick"] = min(e.tick for e in examples).isoformat()
        vocab.provenance["last_tick"] = max(e.tick for e in examples).isoformat()
    return vocab


def audit_vocabulary(vocab: Vocabulary, splits: TaskSplits) -> None:
    """Raise if the vocabulary saw text from the validation or test period."""
    last = vocab.provenance.get("last_tick")
    if last is None:
        raise TaskError("vocabulary carries no provenance; cannot audit for leakage")
    if splits.val_start is not None and dt.date.fromisoformat(last) >= splits.val_start:
        raise TaskError(f"vocabulary includes text from {last}, on or after the validation start "
                        f"{splits.val_start}")


def featurize(text: str, vocab: Vocabulary) -> SparseBinaryVector:
    idx = {vocab.index[t] for t in tokenize(text) if t in vocab.index}
    return SparseBinaryVector(tuple(sorted(idx)))


def featurize_many(texts: Sequence[str], vocab: Vocabulary) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    for text in texts:
        indices.extend(featurize(text, vocab).on_indices)
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float64)
    return sp.csr_matrix((data, np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
                         shape=(len(texts), len(vocab)))
