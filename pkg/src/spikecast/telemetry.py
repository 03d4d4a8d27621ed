"""Per-minute multi-node telemetry: records, validation, CSV ingestion and windowing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

METRICS = ("response_ms", "errors_per_min", "memory_mb", "throughput", "apdex")
CSV_HEADER = ("timestamp_min", "node") + METRICS

# consecutive missing minutes that may be repaired by interpolation
MAX_GAP_MINUTES = 3


class TelemetryError(ValueError):
    pass


@dataclass(frozen=True)
class MetricRecord:
    timestamp: int
    node: str
    response_ms: float
    errors_per_min: float
    memory_mb: float
    throughput: float
    apdex: float

    def __post_init__(self):
        if not self.node:
            raise TelemetryError("node id must be non-empty")
        if self.timestamp < 0:
            raise TelemetryError(f"negative timestamp {self.timestamp}")
        for name in METRICS[:-1]:
            v = getattr(self, name)
            if not (v >= 0) or math.isinf(v):
                raise TelemetryError(f"{name}={v} must be a finite non-negative value")
        if not (0.0 <= self.apdex <= 1.0):
            raise TelemetryError(f"apdex={self.apdex} outside [0, 1]")

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, m) for m in METRICS)


@dataclass(frozen=True)
class Topology:
    target: str
    upstream: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "upstream", tuple(self.upstream))
        if not self.target or not all(self.upstream):
            raise TelemetryError("node ids must be non-empty")
        if self.target in self.upstream:
            raise TelemetryError(f"target {self.target!r} is listed as its own upstream")
        if len(set(self.upstream)) != len(self.upstream):
            raise TelemetryError("upstream node ids must be unique")

    @property
    def nodes(self) -> tuple[str, ...]:
        return (self.target,) + self.upstream

    def to_dict(self) -> dict:
        return {"target": self.target, "upstream": list(self.upstream)}

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return cls(d["target"], tuple(d["upstream"]))


@dataclass(frozen=True)
class ApdexBuckets:
    satisfied: int
    tolerating: int
    frustrated: int

    def __post_init__(self):
        if min(self.satisfied, self.tolerating, self.frustrated) < 0:
            raise ValueError("apdex bucket counts must be non-negative")

    @property
    def total(self) -> int:
        return self.satisfied + self.tolerating + self.frustrated


def apdex_score(b: ApdexBuckets) -> float:
    """Satisfied counts fully, tolerating half, frustrated not at all."""
    if b.total == 0:
        raise ValueError("apdex score is undefined for zero samples")
    return (b.satisfied + 0.5 * b.tolerating + 0.0 * b.frustrated) / b.total


@dataclass
class SeriesStore:
    """Aligned 1-minute series for a set of nodes.

    ``data[node]`` is an ``(n_minutes, 5)`` float array whose columns follow
    ``METRICS``; row ``k`` is the sample at minute ``t_start + k``.
    """

    t_start: int
    data: dict[str, np.ndarray]
    repaired: int = 0  # minutes filled by interpolation at construction

    def __post_init__(self):
        self.validate()

    @property
    def n_minutes(self) -> int:
        return next(iter(self.data.values())).shape[0] if self.data else 0

    @property
    def t_end(self) -> int:
        return self.t_start + self.n_minutes - 1

    @property
    def span_minutes(self) -> int:
        return self.n_minutes - 1

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self.data)

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(self.t_start, self.t_start + self.n_minutes, dtype=np.int64)

    def column(self, node: str, metric: str) -> np.ndarray:
        return self.data[node][:, METRICS.index(metric)]

    def records(self, node: str) -> Iterator[MetricRecord]:
        for k, row in enumerate(self.data[node]):
            yield MetricRecord(self.t_start + k, node, *map(float, row))

    def validate(self) -> "SeriesStore":
        if self.t_start < 0:
            raise TelemetryError(f"negative start timestamp {self.t_start}")
        lengths = {node: arr.shape for node, arr in self.data.items()}
        if len({s for s in lengths.values()}) > 1:
            raise TelemetryError(f"nodes cover different spans: {lengths}")
        for node, arr in self.data.items():
            if arr.ndim != 2 or arr.shape[1] != len(METRICS):
                raise TelemetryError(f"node {node!r}: expected (n, {len(METRICS)}) array")
            if not np.isfinite(arr).all():
                raise TelemetryError(f"node {node!r}: non-finite metric values")
            if (arr[:, :4] < 0).any():
                raise TelemetryError(f"node {node!r}: negative metric values")
            ap = arr[:, 4]
            if ((ap < 0) | (ap > 1)).any():
                raise TelemetryError(f"node {node!r}: apdex outside [0, 1]")
        return self

    def require(self, nodes: Iterable[str]) -> None:
        missing = [n for n in nodes if n not in self.data]
        if missing:
            raise TelemetryError(f"missing node(s) {', '.join(missing)}")

    def slice_minutes(self, start: int, stop: int) -> "SeriesStore":
        """Rows ``[start, stop)`` by position."""
        return SeriesStore(self.t_start + start, {n: a[start:stop].copy() for n, a in self.data.items()})

    def scaled(self, factor: float, start: int, stop: int | None = None) -> "SeriesStore":
        """Copy with rows ``[start, stop)`` multiplied by ``factor`` (apdex left alone)."""
        out = {}
        for n, a in self.data.items():
            b = a.copy()
            b[start:stop, :4] *= factor
            out[n] = b
        return SeriesStore(self.t_start, out)


def _repair(node: str, stamps: list[int], rows: list[tuple], t0: int, t1: int) -> tuple[np.ndarray, int]:
    """Place a node's samples on the [t0, t1] grid, interpolating short gaps."""
    n = t1 - t0 + 1
    out = np.full((n, len(METRICS)), np.nan)
    idx = np.asarray(stamps, dtype=np.int64) - t0
    out[idx] = np.asarray(rows, dtype=float)
    present = ~np.isnan(out[:, 0])
    if present.all():
        return out, 0
    # run lengths of missing minutes
    missing = np.flatnonzero(~present)
    breaks = np.flatnonzero(np.diff(missing) != 1)
    starts = np.concatenate(([missing[0]], missing[breaks + 1]))
    ends = np.concatenate((missing[breaks], [missing[-1]]))
    for s, e in zip(starts, ends):
        if e - s + 1 > MAX_GAP_MINUTES:
            raise TelemetryError(
                f"node {node!r}: gap of {e - s + 1} minutes at t={t0 + s} exceeds {MAX_GAP_MINUTES}"
            )
    have = np.flatnonzero(present)
    for j in range(len(METRICS)):
        # np.interp holds edge values for leading/trailing gaps
        out[~present, j] = np.interp(missing, have, out[have, j])
    return out, len(missing)


def store_from_records(records: Iterable[MetricRecord], topology: Topology | None = None) -> SeriesStore:
    by_node: dict[str, tuple[list[int], list[tuple]]] = {}
    for r in records:
        stamps, rows = by_node.setdefault(r.node, ([], []))
        if stamps and r.timestamp <= stamps[-1]:
            raise TelemetryError(f"node {r.node!r}: non-monotone timestamp {r.timestamp} after {stamps[-1]}")
        stamps.append(r.timestamp)
        rows.append(r.values())
    if not by_node:
        raise TelemetryError("no telemetry records")
    if topology is not None:
        missing = [n for n in topology.nodes if n not in by_node]
        if missing:
            raise TelemetryError(f"missing node(s) {', '.join(missing)} required by topology")
    t0 = min(s[0][0] for s in by_node.values())
    t1 = max(s[0][-1] for s in by_node.values())
    data, repaired = {}, 0
    for node, (stamps, rows) in by_node.items():
        data[node], r = _repair(node, stamps, rows, t0, t1)
        repaired += r
    return SeriesStore(t0, data, repaired)


def _parse_rows(lines: Iterable[str], source: str) -> Iterator[MetricRecord]:
    reader = csv.reader(line for line in lines)
    header = None
    for lineno, row in enumerate(reader, start=1):
        if not row or row[0].startswith("#"):
            continue
        if header is None:
            header = tuple(c.strip() for c in row)
            if header != CSV_HEADER:
                raise TelemetryError(f"{source}:{lineno}: header must be {','.join(CSV_HEADER)}")
            continue
        if len(row) != len(CSV_HEADER):
            raise TelemetryError(f"{source}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            ts = int(row[0])
            vals = [float(v) for v in row[2:]]
            yield MetricRecord(ts, row[1].strip(), *vals)
        except (ValueError, TelemetryError) as e:
            raise TelemetryError(f"{source}:{lineno}: {e}") from None
    if header is None:
        raise TelemetryError(f"{source}: empty file")


def ingest_csv(path: str | Path, topology: Topology) -> SeriesStore:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        return store_from_records(_parse_rows(fh, path.name), topology)


def write_csv(store: SeriesStore, path: str | Path, comments: Sequence[str] = ()) -> None:
    ts = store.timestamps
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(CSV_HEADER) + "\n")
        for node, arr in store.data.items():
            for t, row in zip(ts, arr):
                fh.write(f"{t},{node}," + ",".join(f"{v:.4f}" for v in row) + "\n")


@dataclass
class WindowSeries:
    """Non-overlapping window aggregates: per-metric means plus the response maximum."""

    t_start: int
    window_minutes: int
    means: dict[str, np.ndarray]
    response_max: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_windows(self) -> int:
        return next(iter(self.means.values())).shape[0]

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(self.means)

    def scaled(self, factor: float, start: int, stop: int | None = None) -> "WindowSeries":
        means, peaks = {}, {}
        for n in self.means:
            m = self.means[n].copy()
            m[start:stop, :4] *= factor
            p = self.response_max[n].copy()
            p[start:stop] *= factor
            means[n], peaks[n] = m, p
        return WindowSeries(self.t_start, self.window_minutes, means, peaks)


def windowize(store: SeriesStore, window_minutes: int = 10) -> WindowSeries:
    if store.n_minutes == 0 or not store.data:
        raise TelemetryError("cannot windowize an empty store")
    if window_minutes < 1:
        raise ValueError("window_minutes must be >= 1")
    w = store.n_minutes // window_minutes
    if w == 0:
        raise TelemetryError(f"store has {store.n_minutes} minutes, shorter than one {window_minutes}-minute window")
    means, peaks = {}, {}
    for node, arr in store.data.items():
        blocks = arr[: w * window_minutes].reshape(w, window_minutes, len(METRICS))
        means[node] = blocks.mean(axis=1)
        peaks[node] = blocks[:, :, 0].max(axis=1)
    return WindowSeries(store.t_start, window_minutes, means, peaks)
