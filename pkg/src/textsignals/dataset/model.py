from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Iterator

from .. import __version__
from ..core import Signal, SignalError, TickLike, to_tick

# metadata keys that are not part of value equality
_VOLATILE_KEYS = ("built_at", "fields")


@dataclass
class SignalsDataset:
    """Signals sharing one ``[start, end)`` range, keyed by QID."""

    metadata: dict
    signals: dict[str, Signal] = field(default_factory=dict)

    def __post_init__(self):
        self.metadata = dict(self.metadata)
        self.metadata.setdefault("tool_version", __version__)
        for key in ("name", "start", "end"):
            if key not in self.metadata:
                raise SignalError(f"dataset metadata lacks {key!r}")
        start, end = self.start, self.end
        if start >= end:
            raise SignalError(f"dataset start {start} must precede end {end}")
        self.signals = dict(sorted(self.signals.items()))
        for qid, signal in self.signals.items():
            if signal.id != qid:
                raise SignalError(f"signal keyed {qid!r} has id {signal.id!r}")
            if not signal.is_aligned() or (signal.start, signal.end) != (start, end):
                raise SignalError(f"signal {qid} does not cover [{start}, {end})")

    @property
    def name(self) -> str:
        return self.metadata["name"]

    @property
    def start(self) -> dt.date:
        return to_tick(self.metadata["start"])

    @property
    def end(self) -> dt.date:
        return to_tick(self.metadata["end"])

    @property
    def warnings(self) -> list[str]:
        return list(self.metadata.get("warnings", []))

    def __len__(self) -> int:
        return len(self.signals)

    def __iter__(self) -> Iterator[Signal]:
        return iter(self.signals.values())

    def __getitem__(self, qid: str) -> Signal:
        return self.signals[qid]

    def slice(self, start: TickLike, end: TickLike) -> SignalsDataset:
        start, end = to_tick(start), to_tick(end)
        meta = {**self.metadata, "start": max(start, self.start).isoformat(), "end": min(end, self.end).isoformat()}
        return SignalsDataset(meta, {q: s.slice(start, end) for q, s in self.signals.items()})

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignalsDataset):
            return NotImplemented
        strip = lambda m: {k: v for k, v in m.items() if k not in _VOLATILE_KEYS}  # noqa: E731
        return strip(self.metadata) == strip(other.metadata) and self.signals == other.signals
