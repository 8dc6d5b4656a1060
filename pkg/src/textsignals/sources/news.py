"""News sources. The shipped backend reads a local JSONL corpus.

Corpus schema, one object per line::

    {"id": str, "published_at": ISO-8601, "title": str, "body": str?,
     "entity_ids": [QID, ...], "metadata": {str: str}?}
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from ..core import Document, to_tick
from .sparql import EntityRecord

log = logging.getLogger(__name__)

DEFAULT_STORIES_PER_DAY = 20


@dataclass(frozen=True)
class NewsQuery:
    entity: EntityRecord
    tick: dt.date
    limit: int = DEFAULT_STORIES_PER_DAY

    def __post_init__(self):
        object.__setattr__(self, "tick", to_tick(self.tick))
        if self.limit < 1:
            raise ValueError("limit must be >= 1")


class NewsSource(Protocol):
    def count(self, entity: EntityRecord, tick: dt.date) -> int:
        """Number of stories about ``entity`` published on ``tick``."""

    def sample(self, query: NewsQuery, seed: int) -> list[Document]:
        """Up to ``query.limit`` stories about the entity on ``query.tick``."""


def derive_seed(seed: int, *parts: str) -> int:
    digest = hashlib.sha256(":".join([str(seed), *parts]).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class LocalCorpusSource:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._index: dict[tuple[str, dt.date], list[Document]] = {}
        self._entities: set[str] = set()
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                    doc = Document.from_dict(raw)
                    entity_ids = list(raw.get("entity_ids") or [])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad corpus record: {exc}") from exc
                for qid in dict.fromkeys(entity_ids):
                    self._entities.add(qid)
                    self._index.setdefault((qid, doc.tick), []).append(doc)

    def pool(self, entity: EntityRecord, tick: dt.date) -> list[Document]:
        return list(self._index.get((entity.qid, to_tick(tick)), ()))

    def count(self, entity: EntityRecord, tick: dt.date) -> int:
        return len(self._index.get((entity.qid, to_tick(tick)), ()))

    def sample(self, query: NewsQuery, seed: int) -> list[Document]:
        if query.entity.qid not in self._entities:
            log.info("entity %s not present in corpus %s", query.entity.qid, self.path)
            return []
        pool = self.pool(query.entity, query.tick)
        if len(pool) <= query.limit:
            return pool
        rng = random.Random(derive_seed(seed, query.entity.qid, query.tick.isoformat()))
        return rng.sample(pool, query.limit)


def fetch_stories(source: NewsSource, query: NewsQuery, seed: int = 0) -> list[Document]:
    return source.sample(query, seed)
