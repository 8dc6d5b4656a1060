"""Turning a dataset into labelled text examples, chronological splits and balanced samples."""
from __future__ import annotations

import datetime as dt
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..anomaly import AnomalyParams, detect_anomalies
from ..core import to_tick
from ..dataset.build import FEED_NAME
from ..dataset.model import SignalsDataset

HEADLINE_SEPARATOR = "\n"


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskExample:
    qid: str
    tick: dt.date
    text: str
    label: int
    target_name: str
    horizon: int = 0

    def __post_init__(self):
        if self.label not in (0, 1):
            raise TaskError(f"label must be 0 or 1, got {self.label!r}")

    def to_dict(self) -> dict:
        return {"qid": self.qid, "tick": self.tick.isoformat(), "text": self.text, "label": self.label,
                "target_name": self.target_name, "horizon": self.horizon}

    @classmethod
    def from_dict(cls, d: dict) -> TaskExample:
        return cls(d["qid"], to_tick(d["tick"]), d["text"], int(d["label"]), d["target_name"],
                   int(d.get("horizon", 0)))


def write_examples(examples: Iterable[TaskExample], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_examples(path: str | os.PathLike) -> list[TaskExample]:
    with open(path, encoding="utf-8") as fh:
        return [TaskExample.from_dict(json.loads(line)) for line in fh if line.strip()]


def make_examples(ds: SignalsDataset, target: str, anomaly: AnomalyParams | None = None,
                  horizon: int = 0, feed: str = FEED_NAME) -> list[TaskExample]:
    """One example per (signal, tick): the day's headlines, labelled by the
    anomaly flag of ``target`` at ``tick + horizon``.

    Ticks whose shifted day falls outside the dataset range are dropped.
    """
    anomaly = anomaly or AnomalyParams()
    examples = []
    for qid, signal in ds.signals.items():
        if target not in signal.series:
            raise TaskError(f"signal {qid} has no series {target!r}")
        if feed not in signal.feeds:
            raise TaskError(f"signal {qid} has no feed {feed!r}")
        labels = detect_anomalies(signal.series[target], anomaly).values
        ticks = signal.ticks
        stories = signal.feeds[feed]
        for i, tick in enumerate(ticks):
            j = i + horizon
            if not 0 <= j < len(ticks):
                continue
            text = HEADLINE_SEPARATOR.join(doc.title for doc in stories.get(tick))
            examples.append(TaskExample(qid, tick, text, int(labels[j]), target, horizon))
    return examples


@dataclass
class TaskSplits:
    train: list[TaskExample]
    val: list[TaskExample]
    test: list[TaskExample]
    val_start: dt.date | None = None
    test_start: dt.date | None = None
    per_entity: bool = False

    def manifest(self) -> dict:
        def summary(part: list[TaskExample]) -> dict:
            ticks = [e.tick for e in part]
            return {
                "n": len(part),
                "positives": sum(e.label for e in part),
                "first_tick": min(ticks).isoformat() if ticks else None,
                "last_tick": max(ticks).isoformat() if ticks else None,
            }
        return {
            "val_start": self.val_start.isoformat() if self.val_start else None,
            "test_start": self.test_start.isoformat() if self.test_start else None,
            "per_entity": self.per_entity,
            "train": summary(self.train),
            "val": summary(self.val),
            "test": summary(self.test),
        }

    def check_order(self) -> None:
        """Raise unless every train tick precedes every val tick, and val precedes test."""
        groups = {None: (self.train, self.val, self.test)}
        if self.per_entity:
            groups = {}
            for name, part in (("train", self.train), ("val", self.val), ("test", self.test)):
                for e in part:
                    groups.setdefault(e.qid, ([], [], []))[("train", "val", "test").index(name)].append(e)
        for key, (tr, va, te) in groups.items():
            if tr and va and max(e.tick for e in tr) >= min(e.tick for e in va):
                raise TaskError(f"train overlaps val{'' if key is None else f' for {key}'}")
            if va and te and max(e.tick for e in va) >= min(e.tick for e in te):
                raise TaskError(f"val overlaps test{'' if key is None else f' for {key}'}")
            if tr and te and max(e.tick for e in tr) >= min(e.tick for e in te):
                raise TaskError(f"train overlaps test{'' if key is None else f' for {key}'}")


def _cut_points(n_ticks: int, train: float, val: float) -> tuple[int, int]:
    a = int(round(n_ticks * train))
    b = int(round(n_ticks * (train + val)))
    a = min(max(a, 1), n_ticks - 2)
    b = min(max(b, a + 1), n_ticks - 1)
    return a, b


def chrono_split(examples: Sequence[TaskExample], train: float = 0.8, val: float = 0.1, test: float = 0.1,
                 per_entity: bool = False) -> TaskSplits:
    """Split by day. All entities share the same cut dates unless ``per_entity``."""
    if min(train, val, test) < 0 or abs(train + val + test - 1.0) > 1e-9:
        raise TaskError("split fractions must be non-negative and sum to 1")
    if per_entity:
        by_qid: dict[str, list[TaskExample]] = {}
        for ex in examples:
            by_qid.setdefault(ex.qid, []).append(ex)
        out = TaskSplits([], [], [], per_entity=True)
        for qid in sorted(by_qid):
            part = chrono_split(by_qid[qid], train, val, test)
            out.train += part.train
            out.val += part.val
            out.test += part.test
        return out

    ticks = sorted({ex.tick for ex in examples})
    if len(ticks) < 3:
        raise TaskError(f"need at least 3 distinct ticks to split, got {len(ticks)}")
    a, b = _cut_points(len(ticks), train, val)
    val_start, test_start = ticks[a], ticks[b]
    ordered = sorted(examples, key=lambda e: (e.tick, e.qid))
    return TaskSplits(
        train=[e for e in ordered if e.tick < val_start],
        val=[e for e in ordered if val_start <= e.tick < test_start],
        test=[e for e in ordered if e.tick >= test_start],
        val_start=val_start,
        test_start=test_start,
    )


@dataclass
class BalancedSample:
    examples: list[TaskExample]
    stats: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def balance_sample(train: Sequence[TaskExample], n_pos: int = 10_000, n_neg: int = 10_000,
                   seed: int = 0) -> BalancedSample:
    """Draw ``n_pos`` positives and ``n_neg`` negatives, then shuffle.

    A class pool smaller than its request is sampled with replacement and
    flagged in ``stats``.
    """
    rng = np.random.default_rng(seed)
    pools = {1: [e for e in train if e.label == 1], 0: [e for e in train if e.label == 0]}
    stats: dict = {"seed": seed}
    drawn: list[TaskExample] = []
    for label, want, name in ((1, n_pos, "positive"), (0, n_neg, "negative")):
        pool = pools[label]
        replace = want > len(pool)
        stats[f"{name}_pool"] = len(pool)
        stats[f"{name}_requested"] = want
        stats[f"{name}_with_replacement"] = replace
        if want == 0:
            continue
        if not pool:
            raise TaskError(f"no {name} examples in the training pool")
        idx = rng.choice(len(pool), size=want, replace=replace)
        drawn.extend(pool[i] for i in idx)
    order = rng.permutation(len(drawn))
    examples = [drawn[i] for i in order]
    stats["unique_examples"] = len(Counter((e.qid, e.tick) for e in examples))
    return BalancedSample(examples, stats)


def write_split_manifest(splits: TaskSplits, path: str | os.PathLike, **extra) -> None:
    Path(path).write_text(json.dumps({**splits.manifest(), **extra}, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
