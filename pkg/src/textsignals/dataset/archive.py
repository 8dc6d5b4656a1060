"""On-disk dataset format.

A dataset is a gzip-compressed tar with members::

    metadata.json
    signals/<qid>/series.csv     date,<series...>
    signals/<qid>/feed.jsonl     one document per line, with "feed" and "tick"

``metadata.json`` records a SHA-256 for every other member plus a checksum
over itself, so any edited member is reported by name on load. Members are
written in sorted order with zeroed timestamps: the same dataset with the
same ``built_at`` always produces the same bytes.
"""
from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import math
import os
import re
import shutil
import tarfile
from pathlib import Path
from urllib.parse import urlsplit

from .. import __version__
from ..core import Document, Feed, Signal, SignalError, TimeSeries, tick_range, to_tick
from ..sources.http import HttpClient, SourceError, TransportError
from .model import SignalsDataset

FORMAT_VERSION = 1
DOCUMENT_FIELDS = ("id", "published_at", "title", "body", "metadata")
_MEMBER_RE = re.compile(r"^(metadata\.json|signals/Q[0-9]+/(series\.csv|feed\.jsonl))$")


class ArchiveError(SignalError):
    def __init__(self, member: str, reason: str):
        super().__init__(f"{member}: {reason}")
        self.member = member


class ArchiveVersionError(ArchiveError):
    pass


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _metadata_checksum(meta: dict) -> str:
    body = {k: v for k, v in meta.items() if k != "checksum"}
    return _digest(_dumps(body).encode("utf-8"))


# ---------------------------------------------------------------------------
# encoding


def _series_csv(signal: Signal) -> bytes:
    names = sorted(signal.series)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["date", *names])
    columns = [signal.series[n].values.tolist() for n in names]
    for i, tick in enumerate(signal.ticks):
        writer.writerow([tick.isoformat(), *(repr(col[i]) for col in columns)])
    return buf.getvalue().encode("utf-8")


def _feed_jsonl(signal: Signal, fields: tuple[str, ...]) -> bytes:
    lines = []
    for name in sorted(signal.feeds):
        for tick, docs in signal.feeds[name].buckets.items():
            for doc in docs:
                record = {k: v for k, v in doc.to_dict().items() if k in fields}
                record["feed"] = name
                record["tick"] = tick.isoformat()
                lines.append(_dumps(record))
    return "".join(line + "\n" for line in lines).encode("utf-8")


def encode_members(ds: SignalsDataset, fields: tuple[str, ...] | None = None) -> list[tuple[str, bytes]]:
    if fields is None:
        fields = tuple(ds.metadata.get("fields", DOCUMENT_FIELDS))
    unknown = set(fields) - set(DOCUMENT_FIELDS)
    if unknown or not {"id", "published_at"} <= set(fields):
        raise ValueError(f"fields must include id and published_at and be drawn from {DOCUMENT_FIELDS}")
    members: list[tuple[str, bytes]] = []
    signal_meta = []
    for qid, signal in sorted(ds.signals.items()):
        members.append((f"signals/{qid}/series.csv", _series_csv(signal)))
        members.append((f"signals/{qid}/feed.jsonl", _feed_jsonl(signal, fields)))
        signal_meta.append({
            "id": signal.id,
            "name": signal.name,
            "params": dict(sorted(signal.params.items())),
            "series": sorted(signal.series),
            "feeds": sorted(signal.feeds),
        })
    meta = {k: v for k, v in ds.metadata.items() if k not in ("members", "checksum", "signals")}
    meta.setdefault("tool_version", __version__)
    meta.update({
        "format_version": FORMAT_VERSION,
        "start": ds.start.isoformat(),
        "end": ds.end.isoformat(),
        "fields": [f for f in DOCUMENT_FIELDS if f in fields],
        "signals": signal_meta,
        "members": {name: _digest(data) for name, data in members},
    })
    meta["checksum"] = _metadata_checksum(meta)
    meta_bytes = (json.dumps(meta, sort_keys=True, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    return [("metadata.json", meta_bytes), *members]


def save_dataset(ds: SignalsDataset, path: str | os.PathLike, fields: tuple[str, ...] | None = None) -> Path:
    """Write ``ds`` as a ``.tar.gz`` archive. ``fields`` selects which document fields are kept."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    members = encode_members(ds, None if fields is None else tuple(fields))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as raw:
        with gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
            with tarfile.open(fileobj=gz, mode="w", format=tarfile.USTAR_FORMAT) as tar:
                for name, data in members:
                    info = tarfile.TarInfo(name)
                    info.size = len(data)
                    info.mtime = 0
                    info.mode = 0o644
                    info.uid = info.gid = 0
                    info.uname = info.gname = ""
                    tar.addfile(info, io.BytesIO(data))
    tmp.replace(path)
    return path


# ---------------------------------------------------------------------------
# decoding


def _read_tar(path: Path) -> dict[str, bytes]:
    out: dict[str, bytes] = {}
    try:
        with tarfile.open(path, mode="r:gz") as tar:
            for info in tar:
                if not info.isfile():
                    continue
                if not _MEMBER_RE.match(info.name):
                    raise ArchiveError(info.name, "unexpected archive member")
                out[info.name] = tar.extractfile(info).read()
    except (tarfile.TarError, OSError, EOFError) as exc:
        raise ArchiveError(str(path), f"unreadable archive: {exc}") from exc
    return out


def _read_dir(path: Path) -> dict[str, bytes]:
    out: dict[str, bytes] = {}
    for file in sorted(path.rglob("*")):
        if file.is_file():
            name = file.relative_to(path).as_posix()
            if not _MEMBER_RE.match(name):
                raise ArchiveError(name, "unexpected file in dataset directory")
            out[name] = file.read_bytes()
    return out


def _parse_series(member: str, data: bytes, expected: list[str], start, end) -> list[TimeSeries]:
    try:
        rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    except (UnicodeDecodeError, csv.Error) as exc:
        raise ArchiveError(member, f"not valid CSV: {exc}") from exc
    if not rows or rows[0] != ["date", *expected]:
        raise ArchiveError(member, f"header must be date,{','.join(expected)}")
    ticks = tick_range(start, end)
    body = rows[1:]
    seen = set()
    columns: list[list[float]] = [[] for _ in expected]
    for lineno, row in enumerate(body, 2):
        if len(row) != len(expected) + 1:
            raise ArchiveError(member, f"line {lineno}: expected {len(expected) + 1} fields")
        if row[0] in seen:
            raise ArchiveError(member, f"line {lineno}: duplicated date {row[0]}")
        seen.add(row[0])
        try:
            tick = to_tick(row[0])
            values = [float(v) for v in row[1:]]
        except (SignalError, ValueError) as exc:
            raise ArchiveError(member, f"line {lineno}: {exc}") from exc
        if lineno - 2 >= len(ticks) or tick != ticks[lineno - 2]:
            raise ArchiveError(member, f"line {lineno}: date {row[0]} out of sequence")
        if not all(math.isfinite(v) for v in values):
            raise ArchiveError(member, f"line {lineno}: non-finite value")
        for col, v in zip(columns, values):
            col.append(v)
    if len(body) != len(ticks):
        raise ArchiveError(member, f"expected {len(ticks)} rows, found {len(body)}")
    return [TimeSeries(name, start, col) for name, col in zip(expected, columns)]


def _parse_feeds(member: str, data: bytes, expected: list[str], start, end) -> list[Feed]:
    buckets: dict[str, dict] = {name: {t: [] for t in tick_range(start, end)} for name in expected}
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ArchiveError(member, "not UTF-8") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            feed = record.pop("feed")
            tick = to_tick(record.pop("tick"))
            doc = Document.from_dict(record)
        except (ValueError, KeyError, TypeError, SignalError) as exc:
            raise ArchiveError(member, f"line {lineno}: bad document record: {exc}") from exc
        if feed not in buckets:
            raise ArchiveError(member, f"line {lineno}: unknown feed {feed!r}")
        if tick not in buckets[feed]:
            raise ArchiveError(member, f"line {lineno}: tick {tick} outside dataset range")
        if doc.tick != tick:
            raise ArchiveError(member, f"line {lineno}: document {doc.id} does not belong to {tick}")
        buckets[feed][tick].append(doc)
    try:
        return [Feed(name, b) for name, b in buckets.items()]
    except SignalError as exc:
        raise ArchiveError(member, str(exc)) from exc


def decode_members(members: dict[str, bytes]) -> SignalsDataset:
    if "metadata.json" not in members:
        raise ArchiveError("metadata.json", "missing")
    try:
        meta = json.loads(members["metadata.json"].decode("utf-8"))
        if not isinstance(meta, dict):
            raise ValueError("not an object")
    except (ValueError, UnicodeDecodeError) as exc:
        raise ArchiveError("metadata.json", f"not valid JSON: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveVersionError("metadata.json", f"format_version {version!r} is not supported "
                                                   f"(expected {FORMAT_VERSION})")
    if meta.get("checksum") != _metadata_checksum(meta):
        raise ArchiveError("metadata.json", "checksum mismatch")
    try:
        digests: dict = meta["members"]
        start, end = to_tick(meta["start"]), to_tick(meta["end"])
        signal_meta = meta["signals"]
    except (KeyError, SignalError) as exc:
        raise ArchiveError("metadata.json", f"missing or invalid field: {exc}") from exc
    for name in members:
        if name != "metadata.json" and name not in digests:
            raise ArchiveError(name, "not listed in metadata.json")
    for name, digest in sorted(digests.items()):
        if name not in members:
            raise ArchiveError(name, "missing")
        if _digest(members[name]) != digest:
            raise ArchiveError(name, "content does not match recorded digest")

    signals = {}
    for entry in signal_meta:
        qid = entry["id"]
        series_member = f"signals/{qid}/series.csv"
        feed_member = f"signals/{qid}/feed.jsonl"
        for m in (series_member, feed_member):
            if m not in members:
                raise ArchiveError(m, "missing")
        series = _parse_series(series_member, members[series_member], entry["series"], start, end)
        feeds = _parse_feeds(feed_member, members[feed_member], entry["feeds"], start, end)
        signals[qid] = Signal(qid, entry["name"], entry.get("params", {}), series, feeds)
    metadata = {k: v for k, v in meta.items() if k not in ("members", "checksum", "signals", "format_version")}
    return SignalsDataset(metadata, signals)


def load_dataset(path: str | os.PathLike) -> SignalsDataset:
    """Load a ``.tar.gz`` archive or an extracted dataset directory."""
    path = Path(path)
    members = _read_dir(path) if path.is_dir() else _read_tar(path)
    return decode_members(members)


# ---------------------------------------------------------------------------
# remote + cache


def _is_url(value: str) -> bool:
    return urlsplit(str(value)).scheme in ("http", "https")


def _cache_entry_key(url: str) -> tuple[str, str | None]:
    """Content digest from a ``#sha256=<hex>`` fragment if present, else a hash of the URL."""
    parts = urlsplit(url)
    if parts.fragment.startswith("sha256="):
        digest = parts.fragment.split("=", 1)[1].lower()
        return digest, digest
    return _digest(parts._replace(fragment="").geturl().encode("utf-8")), None


def _extract(archive: Path, dest: Path) -> None:
    members = _read_tar(archive)
    for name, data in members.items():
        target = dest / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)


def cached_load(path_or_url: str | os.PathLike, cache_dir: str | os.PathLike | None = None,
                http: HttpClient | None = None) -> SignalsDataset:
    """Load a dataset, downloading and unpacking remote archives at most once.

    Local paths bypass the cache. A cache entry that fails to load is
    discarded and fetched again once.
    """
    if not _is_url(str(path_or_url)):
        return load_dataset(path_or_url)
    url = str(path_or_url)
    if cache_dir is None:
        cache_dir = os.environ.get("NEWS_SIGNALS_CACHE_DIR") or Path.home() / ".cache" / "textsignals"
    key, expected_digest = _cache_entry_key(url)
    entry = Path(cache_dir) / "datasets" / key
    data_dir = entry / "data"

    if data_dir.is_dir():
        try:
            return load_dataset(data_dir)
        except ArchiveError:
            shutil.rmtree(entry)

    http = http or HttpClient(cache_dir=None)
    download_url = urlsplit(url)._replace(fragment="").geturl()
    try:
        response = http.get(download_url, use_cache=False)
    except SourceError as exc:
        if isinstance(exc, TransportError):
            raise
        raise TransportError(f"cannot download {download_url}: {exc}") from exc
    if expected_digest is not None and _digest(response.content) != expected_digest:
        raise TransportError(f"downloaded archive from {download_url} does not match sha256={expected_digest}")
    entry.mkdir(parents=True, exist_ok=True)
    archive = entry / "dataset.tar.gz"
    archive.write_bytes(response.content)
    tmp_dir = entry / "data.tmp"
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    _extract(archive, tmp_dir)
    tmp_dir.replace(data_dir)
    return load_dataset(data_dir)
