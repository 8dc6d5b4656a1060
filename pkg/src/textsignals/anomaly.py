"""Z-score anomaly labelling of daily series."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .core import SignalError, TickLike, TimeSeries, to_tick


@dataclass(frozen=True)
class AnomalyParams:
    """Threshold in standard deviations.

    ``reference_end`` restricts the mean/std estimate to ticks before that
    date, so labels for later periods do not peek at their own statistics.
    """

    threshold_t: float = 3.0
    strict: bool = True
    reference_end: dt.date | None = None

    def __post_init__(self):
        if not self.threshold_t > 0:
            raise ValueError(f"threshold_t must be positive, got {self.threshold_t}")
        if self.reference_end is not None:
            object.__setattr__(self, "reference_end", to_tick(self.reference_end))


def _moments(values: np.ndarray) -> tuple[float, float]:
    mu = float(values.mean())
    sigma = float(np.sqrt(np.mean((values - mu) ** 2)))
    return mu, sigma


def zscore_series(ts: TimeSeries, reference_end: TickLike | None = None) -> TimeSeries:
    """Standardize with the population (divide-by-N) standard deviation.

    A constant reference window yields the all-zero series.
    """
    if len(ts) < 2:
        raise SignalError(f"z-score needs at least 2 values, series {ts.name!r} has {len(ts)}")
    values = ts.values
    ref = values
    if reference_end is not None:
        n_ref = (to_tick(reference_end) - ts.start).days
        if n_ref < 2:
            raise SignalError("reference window must contain at least 2 values")
        ref = values[:n_ref]
    mu, sigma = _moments(ref)
    if sigma == 0.0:
        return ts.with_values(np.zeros_like(values), name=f"{ts.name}_zscore")
    return ts.with_values((values - mu) / sigma, name=f"{ts.name}_zscore")


def detect_anomalies(ts: TimeSeries, params: AnomalyParams | None = None) -> TimeSeries:
    """Binary series: 1 where the z-score exceeds ``params.threshold_t``."""
    params = params or AnomalyParams()
    z = zscore_series(ts, params.reference_end).values
    flags = z > params.threshold_t if params.strict else z >= params.threshold_t
    # a constant series has z == 0 everywhere, so it never fires
    return ts.with_values(flags.astype(np.float64), name=f"{ts.name}_anomalies")


def positive_rate(binary: TimeSeries) -> float:
    values = binary.values
    if not np.all((values == 0) | (values == 1)):
        raise SignalError(f"series {binary.name!r} is not binary")
    return float(values.mean())


def pooled_positive_rate(series: list[TimeSeries]) -> float:
    """Positive rate over the concatenation of several binary series."""
    total = sum(len(s) for s in series)
    if total == 0:
        return 0.0
    return sum(positive_rate(s) * len(s) for s in series) / total
