"""Topology-sampled feature vectors: target response lags plus upstream snapshots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .telemetry import METRICS, SeriesStore, Topology, WindowSeries

DEFAULT_LAGS = (5, 10, 15, 30, 60, 90, 120, 150, 180, 300, 1440)
UPSTREAM_FIELDS = ("rt", "ee", "mp", "thr", "as")


@dataclass(frozen=True)
class LagSpec:
    offsets_min: tuple[int, ...] = DEFAULT_LAGS

    def __post_init__(self):
        offs = tuple(int(o) for o in self.offsets_min)
        object.__setattr__(self, "offsets_min", offs)
        if any(o <= 0 for o in offs):
            raise ValueError("lag offsets must be positive")
        if any(b <= a for a, b in zip(offs, offs[1:])):
            raise ValueError("lag offsets must be strictly increasing")

    @property
    def max_offset(self) -> int:
        return self.offsets_min[-1] if self.offsets_min else 0


def feature_layout(topo: Topology, lags: LagSpec) -> tuple[str, ...]:
    names = ["rt_t"] + [f"rt_lag{o}" for o in lags.offsets_min]
    for node in topo.upstream:
        names += [f"{node}.{f}" for f in UPSTREAM_FIELDS]
    return tuple(names)


@dataclass(frozen=True)
class LabeledExample:
    at: int
    x: np.ndarray
    y: float


@dataclass
class Dataset:
    """Time-ordered examples stored column-wise.

    ``normalization`` holds per-feature ``(min, max)`` rows once the features
    have been min-max scaled; ``synthetic`` flags rows appended by oversampling.
    """

    at: np.ndarray
    X: np.ndarray
    y: np.ndarray
    layout: tuple[str, ...]
    normalization: np.ndarray | None = None
    synthetic: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.at = np.asarray(self.at, dtype=np.int64)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.at), -1)
        self.y = np.asarray(self.y, dtype=float)
        self.layout = tuple(self.layout)
        if self.X.shape[1] != len(self.layout) or len(self.y) != len(self.at):
            raise ValueError("dataset arrays disagree with layout")
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.at), dtype=bool)

    def __len__(self) -> int:
        return len(self.y)

    @property
    def examples(self) -> Iterator[LabeledExample]:
        for t, x, y in zip(self.at, self.X, self.y):
            yield LabeledExample(int(t), x, float(y))

    def subset(self, rows) -> "Dataset":
        return replace(self, at=self.at[rows], X=self.X[rows], y=self.y[rows], synthetic=self.synthetic[rows])

    def split(self, fraction: float = 0.8) -> tuple["Dataset", "Dataset"]:
        cut = int(math.floor(fraction * len(self)))
        return self.subset(slice(0, cut)), self.subset(slice(cut, None))


def build_examples(
    store: SeriesStore, topo: Topology, lags: LagSpec = LagSpec(), horizon_min: int = 30
) -> Dataset:
    store.require(topo.nodes)
    need = lags.max_offset + horizon_min
    if store.span_minutes < need:
        raise ValueError(
            f"store spans {store.span_minutes} minutes; at least {need} "
            f"(max lag {lags.max_offset} + horizon {horizon_min}) are required"
        )
    rt = store.column(topo.target, "response_ms")
    n = store.n_minutes
    rows = np.arange(lags.max_offset, n - horizon_min)
    cols = [rt[rows]] + [rt[rows - o] for o in lags.offsets_min]
    for node in topo.upstream:
        arr = store.data[node]
        cols += [arr[rows, j] for j in range(len(METRICS))]
    X = np.column_stack(cols)
    return Dataset(store.t_start + rows, X, rt[rows + horizon_min], feature_layout(topo, lags))


@dataclass
class WindowFrame:
    """Window-level features for every window, used by the rolling backtest.

    ``X[w]`` describes window ``w``; ``peak[w]`` is the target's response max
    in window ``w``. An example at ``w`` is labelled with ``peak[w + horizon]``.
    """

    at: np.ndarray
    X: np.ndarray
    peak: np.ndarray
    horizon: int
    layout: tuple[str, ...]

    def dataset(self, feature_rows: np.ndarray) -> Dataset:
        return Dataset(self.at[feature_rows], self.X[feature_rows], self.peak[feature_rows + self.horizon], self.layout)


def window_frame(ws: WindowSeries, topo: Topology, lags: LagSpec = LagSpec(), horizon_min: int = 30) -> WindowFrame:
    """Lags map to ``ceil(offset / window)`` windows; history before window 0 clamps to it."""
    missing = [n for n in topo.nodes if n not in ws.means]
    if missing:
        raise ValueError(f"missing node(s) {', '.join(missing)}")
    W, wm = ws.n_windows, ws.window_minutes
    idx = np.arange(W)
    rt = ws.means[topo.target][:, 0]
    cols = [rt] + [rt[np.maximum(idx - math.ceil(o / wm), 0)] for o in lags.offsets_min]
    for node in topo.upstream:
        cols += list(ws.means[node].T)
    at = ws.t_start + idx * wm
    h = math.ceil(horizon_min / wm)
    return WindowFrame(at, np.column_stack(cols), ws.response_max[topo.target], h, feature_layout(topo, lags))


def fit_normalization(X: np.ndarray) -> np.ndarray:
    return np.column_stack((X.min(axis=0), X.max(axis=0)))


def apply_normalization(X: np.ndarray, stats: np.ndarray) -> np.ndarray:
    lo, hi = stats[:, 0], stats[:, 1]
    rng = hi - lo
    safe = np.where(rng > 0, rng, 1.0)
    return np.where(rng > 0, (X - lo) / safe, 0.0)


def invert_normalization(Z: np.ndarray, stats: np.ndarray) -> np.ndarray:
    lo, hi = stats[:, 0], stats[:, 1]
    return lo + Z * (hi - lo)


def normalize(ds: Dataset, stats: np.ndarray | None = None) -> Dataset:
    """Min-max scale features; pass ``stats`` to reuse a training fit."""
    if len(ds) == 0:
        raise ValueError("cannot normalize an empty dataset")
    if stats is None:
        stats = fit_normalization(ds.X)
    return replace(ds, X=apply_normalization(ds.X, stats), normalization=stats)


def denormalize(ds: Dataset) -> Dataset:
    if ds.normalization is None:
        return ds
    return replace(ds, X=invert_normalization(ds.X, ds.normalization), normalization=None)


def write_dataset(ds: Dataset, path: str | Path, comments: Sequence[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(("at",) + ds.layout + ("y",)) + "\n")
        for t, x, y in zip(ds.at, ds.X, ds.y):
            fh.write(f"{t}," + ",".join(repr(float(v)) for v in x) + f",{float(y)!r}\n")


def read_dataset(path: str | Path, layout: Sequence[str] | None = None) -> Dataset:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path.name}: empty dataset file")
    header = lines[0].strip().split(",")
    if len(header) < 3 or header[0] != "at" or header[-1] != "y":
        raise ValueError(f"{path.name}: header must be at,<features...>,y")
    found = tuple(header[1:-1])
    if layout is not None and tuple(layout) != found:
        raise ValueError(f"{path.name}: feature layout does not match the expected layout")
    body = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.empty((0, len(header)))
    return Dataset(body[:, 0].astype(np.int64), body[:, 1:-1], body[:, -1], found)
