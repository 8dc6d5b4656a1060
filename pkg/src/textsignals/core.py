"""Time-indexed data model: daily time series, document feeds and signals.

A tick is one UTC calendar day, represented as :class:`datetime.date`.
Ranges are half-open ``[start, end)`` everywhere.
"""
from __future__ import annotations

import copy
import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

TickLike = Union[str, dt.date, dt.datetime]

ONE_DAY = dt.timedelta(days=1)


class SignalError(ValueError):
    """Raised when a core invariant would be violated."""


def to_tick(value: TickLike) -> dt.date:
    """Coerce an ISO string, date or datetime to a tick (UTC day)."""
    if isinstance(value, dt.datetime):
        return utc_day(value)
    if isinstance(value, dt.date):
        return value
    if isinstance(value, str):
        try:
            return dt.date.fromisoformat(value[:10])
        except ValueError:
            raise SignalError(f"not an ISO date: {value!r}") from None
    raise TypeError(f"cannot interpret {type(value).__name__} as a tick")


def utc_day(ts: dt.datetime) -> dt.date:
    # naive timestamps are taken to be UTC already
    if ts.tzinfo is not None:
        ts = ts.astimezone(dt.timezone.utc)
    return ts.date()


def parse_timestamp(value: str | dt.datetime) -> dt.datetime:
    if isinstance(value, dt.datetime):
        ts = value
    else:
        text = value.strip()
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        ts = dt.datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=dt.timezone.utc)
    return ts


def format_timestamp(ts: dt.datetime) -> str:
    ts = ts.astimezone(dt.timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S") + (f".{ts.microsecond:06d}" if ts.microsecond else "") + "Z"


def tick_range(start: TickLike, end: TickLike) -> list[dt.date]:
    start, end = to_tick(start), to_tick(end)
    return [start + ONE_DAY * i for i in range((end - start).days)]


# ---------------------------------------------------------------------------
# Time series


class TimeSeries:
    """One finite real value per consecutive day, starting at ``start``."""

    __slots__ = ("name", "start", "_values")

    def __init__(self, name: str, start: TickLike, values: Iterable[float]):
        arr = np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
        if arr.ndim != 1:
            raise SignalError("series values must be one-dimensional")
        if arr.size == 0:
            raise SignalError(f"empty series {name!r}")
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise SignalError(f"non-finite value in series {name!r} at index {int(bad[0])}")
        arr.setflags(write=False)
        self.name = name
        self.start = to_tick(start)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def end(self) -> dt.date:
        return self.start + ONE_DAY * len(self._values)

    @property
    def ticks(self) -> list[dt.date]:
        return tick_range(self.start, self.end)

    def __len__(self) -> int:
        return len(self._values)

    def __iter__(self) -> Iterator[tuple[dt.date, float]]:
        return zip(self.ticks, self._values.tolist())

    def __getitem__(self, tick: TickLike) -> float:
        offset = (to_tick(tick) - self.start).days
        if not 0 <= offset < len(self._values):
            raise KeyError(str(tick))
        return float(self._values[offset])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.name == other.name
            and self.start == other.start
            and np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        return f"TimeSeries({self.name!r}, {self.start.isoformat()}..{self.end.isoformat()}, n={len(self)})"

    def with_values(self, values: Iterable[float], name: str | None = None) -> TimeSeries:
        return TimeSeries(self.name if name is None else name, self.start, values)

    def renamed(self, name: str) -> TimeSeries:
        return TimeSeries(name, self.start, self._values)

    def between(self, start: TickLike, end: TickLike) -> TimeSeries:
        start, end = to_tick(start), to_tick(end)
        lo = max(start, self.start)
        hi = min(end, self.end)
        if lo >= hi:
            raise SignalError("empty slice")
        a = (lo - self.start).days
        b = (hi - self.start).days
        return TimeSeries(self.name, lo, self._values[a:b])

    def idxmax(self) -> dt.date:
        return idxmax(self)


def make_time_series(name: str, start: TickLike, values: Sequence[float]) -> TimeSeries:
    return TimeSeries(name, start, values)


def idxmax(ts: TimeSeries) -> dt.date:
    """Tick of the largest value; the earliest tick wins ties."""
    # np.argmax returns the first occurrence of the maximum
    return ts.start + ONE_DAY * int(np.argmax(ts.values))


# ---------------------------------------------------------------------------
# Documents and feeds


@dataclass(frozen=True)
class Document:
    id: str
    published_at: dt.datetime
    title: str
    body: str | None = None
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise SignalError("document id must be non-empty")
        object.__setattr__(self, "published_at", parse_timestamp(self.published_at))
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def tick(self) -> dt.date:
        return utc_day(self.published_at)

    def to_dict(self) -> dict:
        out = {"id": self.id, "published_at": format_timestamp(self.published_at), "title": self.title}
        if self.body is not None:
            out["body"] = self.body
        if self.metadata:
            out["metadata"] = dict(sorted(self.metadata.items()))
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> Document:
        return cls(
            id=str(d["id"]),
            published_at=parse_timestamp(d["published_at"]),
            title=d.get("title", ""),
            body=d.get("body"),
            metadata={str(k): str(v) for k, v in (d.get("metadata") or {}).items()},
        )


class Feed:
    """Per-tick buckets of documents. Bucket order is kept as given."""

    __slots__ = ("name", "_buckets")

    def __init__(self, name: str, buckets: Mapping[TickLike, Sequence[Document]] | None = None):
        self.name = name
        normalized: dict[dt.date, tuple[Document, ...]] = {}
        for key, docs in (buckets or {}).items():
            tick = to_tick(key)
            if tick in normalized:
                raise SignalError(f"feed {name!r}: duplicate bucket {tick}")
            docs = tuple(docs)
            seen = set()
            for doc in docs:
                if doc.tick != tick:
                    raise SignalError(
                        f"feed {name!r}: document {doc.id!r} published {doc.published_at.isoformat()} "
                        f"does not belong to bucket {tick}"
                    )
                if doc.id in seen:
                    raise SignalError(f"feed {name!r}: duplicate document id {doc.id!r} in bucket {tick}")
                seen.add(doc.id)
            normalized[tick] = docs
        self._buckets = dict(sorted(normalized.items()))

    @classmethod
    def from_documents(cls, name: str, docs: Iterable[Document]) -> Feed:
        buckets: dict[dt.date, list[Document]] = {}
        for doc in docs:
            buckets.setdefault(doc.tick, []).append(doc)
        return cls(name, buckets)

    @property
    def buckets(self) -> Mapping[dt.date, tuple[Document, ...]]:
        return dict(self._buckets)

    @property
    def ticks(self) -> list[dt.date]:
        return list(self._buckets)

    @property
    def range(self) -> tuple[dt.date, dt.date] | None:
        if not self._buckets:
            return None
        keys = list(self._buckets)
        return keys[0], keys[-1] + ONE_DAY

    def get(self, tick: TickLike) -> tuple[Document, ...]:
        return self._buckets.get(to_tick(tick), ())

    def __getitem__(self, tick: TickLike) -> tuple[Document, ...]:
        return self._buckets[to_tick(tick)]

    def __len__(self) -> int:
        return len(self._buckets)

    def documents(self) -> Iterator[Document]:
        for docs in self._buckets.values():
            yield from docs

    def between(self, start: TickLike, end: TickLike, fill: bool = False) -> Feed:
        start, end = to_tick(start), to_tick(end)
        kept = {t: docs for t, docs in self._buckets.items() if start <= t < end}
        if fill:
            for t in tick_range(start, end):
                kept.setdefault(t, ())
        return Feed(self.name, kept)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Feed):
            return NotImplemented
        return self.name == other.name and self._buckets == other._buckets

    def __repr__(self) -> str:
        n_docs = sum(len(d) for d in self._buckets.values())
        return f"Feed({self.name!r}, buckets={len(self._buckets)}, documents={n_docs})"


# ---------------------------------------------------------------------------
# Signals


@dataclass
class RowTable:
    """Flat per-tick view of a signal, without any population metadata."""

    series_columns: list[str]
    feed_columns: list[str]
    rows: list[tuple[dt.date, dict[str, float], dict[str, tuple[Document, ...]]]]

    @property
    def columns(self) -> list[str]:
        return self.series_columns + self.feed_columns

    def __len__(self) -> int:
        return len(self.rows)

    def loc(self, tick: TickLike) -> dict:
        tick = to_tick(tick)
        for t, values, docs in self.rows:
            if t == tick:
                return {**values, **docs}
        raise KeyError(str(tick))

    def column(self, name: str) -> list:
        if name in self.series_columns:
            return [values[name] for _, values, _ in self.rows]
        if name in self.feed_columns:
            return [docs[name] for _, _, docs in self.rows]
        raise KeyError(name)


class Signal:
    """An entity's daily series plus document feeds.

    ``add_series`` and ``add_feed`` return the signal itself so calls chain;
    every other transform returns a new signal.
    """

    def __init__(self, id: str, name: str | None = None, params: Mapping[str, str] | None = None,
                 series: Iterable[TimeSeries] = (), feeds: Iterable[Feed] = ()):
        self.id = id
        self.name = name if name is not None else id
        self.params = dict(params or {})
        self.series: dict[str, TimeSeries] = {}
        self.feeds: dict[str, Feed] = {}
        for ts in series:
            self.add_series(ts)
        for feed in feeds:
            self.add_feed(feed)

    def add_series(self, ts: TimeSeries) -> Signal:
        if ts.name in self.series:
            raise SignalError(f"duplicate series {ts.name!r} on signal {self.id}")
        self.series[ts.name] = ts
        return self

    def add_feed(self, feed: Feed) -> Signal:
        if feed.name in self.feeds:
            raise SignalError(f"duplicate feed {feed.name!r} on signal {self.id}")
        self.feeds[feed.name] = feed
        return self

    # ranges ---------------------------------------------------------------

    def _ranges(self) -> list[tuple[dt.date, dt.date]]:
        ranges = [(ts.start, ts.end) for ts in self.series.values()]
        ranges += [f.range for f in self.feeds.values() if f.range is not None]
        return ranges

    @property
    def start(self) -> dt.date:
        return min(r[0] for r in self._ranges())

    @property
    def end(self) -> dt.date:
        return max(r[1] for r in self._ranges())

    @property
    def ticks(self) -> list[dt.date]:
        return tick_range(self.start, self.end)

    def is_aligned(self) -> bool:
        if not self.series:
            return False
        ranges = {(ts.start, ts.end) for ts in self.series.values()}
        if len(ranges) != 1:
            return False
        (start, end), = ranges
        expected = tick_range(start, end)
        return all(f.ticks == expected for f in self.feeds.values())

    # transforms -----------------------------------------------------------

    def slice(self, start: TickLike, end: TickLike) -> Signal:
        return slice_signal(self, start, end)

    def __call__(self, start: TickLike, end: TickLike) -> Signal:
        return slice_signal(self, start, end)

    def align(self) -> Signal:
        return align(self)

    def row_table(self) -> RowTable:
        return to_row_table(self)

    def plot(self, out_dir: str | os.PathLike) -> tuple[Path, Path]:
        return export_plot(self, out_dir)

    def copy(self) -> Signal:
        return Signal(self.id, self.name, dict(self.params), self.series.values(), self.feeds.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Signal):
            return NotImplemented
        return (
            self.id == other.id
            and self.name == other.name
            and self.params == other.params
            and self.series == other.series
            and self.feeds == other.feeds
        )

    def __repr__(self) -> str:
        return f"Signal({self.id!r}, series={list(self.series)}, feeds={list(self.feeds)})"

    def __deepcopy__(self, memo):
        return Signal(self.id, self.name, copy.deepcopy(self.params, memo),
                      self.series.values(), self.feeds.values())


def slice_signal(signal: Signal, start: TickLike, end: TickLike) -> Signal:
    """Restrict every series and feed to ``[start, end)``.

    Raises :class:`SignalError` (``"empty slice"``) when the window misses the signal.
    """
    start, end = to_tick(start), to_tick(end)
    if start >= end:
        raise SignalError("slice start must be before end")
    ranges = signal._ranges()
    if not ranges or all(end <= lo or start >= hi for lo, hi in ranges):
        raise SignalError("empty slice")
    out = Signal(signal.id, signal.name, dict(signal.params))
    for ts in signal.series.values():
        if start < ts.end and end > ts.start:
            out.add_series(ts.between(start, end))
    for feed in signal.feeds.values():
        out.add_feed(feed.between(start, end))
    if not out.series and not any(len(f) for f in out.feeds.values()):
        raise SignalError("empty slice")
    return out


def align(signal: Signal) -> Signal:
    """Trim all series and feeds to their common range.

    Feed ranges are taken from their first and last bucket; after alignment
    every feed has a (possibly empty) bucket for each tick.
    """
    if not signal.series:
        raise SignalError(f"signal {signal.id} has no series to align")
    ranges = signal._ranges()
    start = max(r[0] for r in ranges)
    end = min(r[1] for r in ranges)
    if start >= end:
        raise SignalError(f"signal {signal.id}: series and feeds do not overlap")
    out = Signal(signal.id, signal.name, dict(signal.params))
    for ts in signal.series.values():
        out.add_series(ts.between(start, end))
    for feed in signal.feeds.values():
        out.add_feed(feed.between(start, end, fill=True))
    return out


def to_row_table(signal: Signal) -> RowTable:
    if not signal.is_aligned():
        raise SignalError(f"signal {signal.id} is not aligned; call align() first")
    series_names = list(signal.series)
    feed_names = list(signal.feeds)
    arrays = {name: signal.series[name].values.tolist() for name in series_names}
    rows = []
    for i, tick in enumerate(signal.ticks):
        values = {name: arrays[name][i] for name in series_names}
        docs = {name: signal.feeds[name].get(tick) for name in feed_names}
        rows.append((tick, values, docs))
    return RowTable(series_names, feed_names, rows)


# ---------------------------------------------------------------------------
# Plot export

_PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def export_plot(signal: Signal, out_dir: str | os.PathLike, width: int = 800, height: int = 300) -> tuple[Path, Path]:
    """Write ``plot.csv`` and ``plot.svg`` (one polyline per series) into ``out_dir``."""
    table = to_row_table(signal)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "plot.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["date", *table.series_columns])
            for tick, values, _ in table.rows:
                writer.writerow([tick.isoformat(), *(repr(values[c]) for c in table.series_columns)])
        svg_path = out / "plot.svg"
        svg_path.write_text(_render_svg(signal, table, width, height), encoding="utf-8")
    except OSError as exc:
        raise SignalError(f"cannot write plot to {out}: {exc}") from exc
    return csv_path, svg_path


def _render_svg(signal: Signal, table: RowTable, width: int, height: int) -> str:
    pad = 40
    n = len(table.rows)
    all_values = [v for _, values, _ in table.rows for v in values.values()]
    lo, hi = min(all_values), max(all_values)
    if math.isclose(lo, hi):
        lo, hi = lo - 1.0, hi + 1.0
    x_step = (width - 2 * pad) / max(n - 1, 1)

    def y(v: float) -> float:
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{_xml_escape(signal.name)}</title>",
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="#333"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#333"/>',
        f'<text x="{pad}" y="{height - pad / 3:.1f}" font-size="10">{table.rows[0][0].isoformat()}</text>',
        f'<text x="{width - pad}" y="{height - pad / 3:.1f}" font-size="10" text-anchor="end">'
        f"{table.rows[-1][0].isoformat()}</text>",
    ]
    for k, name in enumerate(table.series_columns):
        colour = _PALETTE[k % len(_PALETTE)]
        points = " ".join(
            f"{pad + i * x_step:.2f},{y(values[name]):.2f}" for i, (_, values, _) in enumerate(table.rows)
        )
        parts.append(
            f'<polyline data-series="{_xml_escape(name)}" fill="none" stroke="{colour}" '
            f'stroke-width="1.5" points="{points}"/>'
        )
        parts.append(
            f'<text x="{width - pad}" y="{pad + 12 * k}" font-size="10" fill="{colour}" '
            f'text-anchor="end">{_xml_escape(name)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
