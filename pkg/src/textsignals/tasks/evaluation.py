"""Precision/recall/F1 on the positive class and the two random baselines."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    pos_rate: float
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return asdict(self)


def _binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be a 1-d sequence of 0/1 labels")
    return arr


def evaluate(pred: Sequence[int], gold: Sequence[int]) -> EvalReport:
    pred = _binary(pred, "pred")
    gold = _binary(gold, "gold")
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} predictions, {len(gold)} gold labels")
    tp = int(np.sum((pred == 1) & (gold == 1)))
    fp = int(np.sum((pred == 1) & (gold == 0)))
    fn = int(np.sum((pred == 0) & (gold == 1)))
    tn = int(np.sum((pred == 0) & (gold == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    pos_rate = float(pred.mean()) if len(pred) else 0.0
    return EvalReport(precision, recall, f1, pos_rate, tp, fp, fn, tn)


def random_target(n: int, p: float, seed: int = 0) -> np.ndarray:
    """iid Bernoulli(p) labels."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random(n) < p).astype(np.int64)


def random_uniform(n: int, seed: int = 0) -> np.ndarray:
    return random_target(n, 0.5, seed)


def format_table(rows: dict[str, EvalReport]) -> str:
    """Plain-text table with prec / rec / f1 / %pos columns."""
    width = max([len("model")] + [len(name) for name in rows])
    lines = [f"{'model':<{width}}  {'prec':>6}  {'rec':>6}  {'f1':>6}  {'%pos':>6}"]
    for name, r in rows.items():
        lines.append(f"{name:<{width}}  {r.precision:6.3f}  {r.recall:6.3f}  {r.f1:6.3f}  {r.pos_rate:6.3f}")
    return "\n".join(lines)
