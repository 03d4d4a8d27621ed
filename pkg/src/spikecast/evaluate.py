"""Two-stage evaluation: 80/20 model selection, rolling backtest, alarm-threshold sweep."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import learners
from .features import Dataset, LagSpec, window_frame
from .resample import SmoteConfig
from .telemetry import Topology, WindowSeries
from .tuner import DEConfig, DEResult, oversample, tune_learner

SPIKE_MS = 470.0
L_CHOICES = (0.25, 0.5, 1, 5, 24, 48)


def _pct(v: float | None) -> int | None:
    return None if v is None else int(math.floor(100.0 * v + 0.5))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def alarms(self) -> int:
        return self.tp + self.fp

    def percent_row(self) -> tuple[int | None, int | None]:
        """Recall and precision as integer percentages, half rounding up."""
        return _pct(self.recall), _pct(self.precision)


def confusion(
    predicted: Sequence[float], actual: Sequence[float],
    spike_threshold_ms: float = SPIKE_MS, alarm_threshold_ms: float = SPIKE_MS,
) -> ConfusionMatrix:
    predicted, actual = np.asarray(predicted, dtype=float), np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise ValueError(f"length mismatch: {predicted.shape[0]} predictions vs {actual.shape[0]} actuals")
    pos = actual > spike_threshold_ms
    alarm = predicted > alarm_threshold_ms
    return ConfusionMatrix(
        int(np.sum(alarm & pos)), int(np.sum(alarm & ~pos)),
        int(np.sum(~alarm & pos)), int(np.sum(~alarm & ~pos)),
    )


# ---------------------------------------------------------------- stage 1

# (learner, smote, tune) combinations compared in model selection
TREATMENTS = (
    ("cart", True, True), ("forest", True, False), ("forest", False, False),
    ("forest", True, True), ("cart", True, False), ("cart", False, False),
    ("logistic", True, False), ("logistic", False, False),
)


@dataclass
class Stage1Result:
    learner: str
    smote: bool
    tune: bool
    confusion: ConfusionMatrix
    params: object
    model: object
    n_train: int
    n_test: int
    tuning: DEResult | None = None

    def row(self) -> dict:
        r, p = self.confusion.percent_row()
        c = self.confusion
        return {
            "learner": self.learner, "smote": int(self.smote), "tune": int(self.tune),
            "tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn,
            "recall_pct": "" if r is None else r, "precision_pct": "" if p is None else p,
        }


def stage1(
    ds: Dataset,
    learner: str = "cart",
    params: dict | None = None,
    smote_cfg: SmoteConfig | None = None,
    tune: DEConfig | None = None,
    spike_threshold_ms: float = SPIKE_MS,
    seed: int = 0,
) -> Stage1Result:
    """Fit on the earliest 80% of rows, score on the latest 20%.

    SMOTE and tuning only ever see the training rows.
    """
    if learner not in learners.LEARNERS:
        raise learners.UnsupportedLearnerError(f"unsupported learner {learner!r}")
    if np.any(np.diff(ds.at) < 0):
        raise ValueError("stage1 needs a time-ordered dataset")
    train, test = ds.split(0.8)
    tuning = None
    values = dict(params or {})
    if tune is not None:
        tuning = tune_learner(train, None, learner, tune, spike_threshold_ms, smote_cfg, fixed=values)
        values.update(tuning.params)
    p = learners.make_params(learner, values, seed=seed)
    model = learners.fit(learner, oversample(train, smote_cfg), p, spike_threshold_ms)
    actual = test.y > spike_threshold_ms
    if not actual.any():
        warnings.warn("stage1: the test split contains no spikes; recall is undefined", stacklevel=2)
    scores, cut = learners.alarm_scores(model, test.X, spike_threshold_ms)
    cm = ConfusionMatrix(
        int(np.sum((scores > cut) & actual)), int(np.sum((scores > cut) & ~actual)),
        int(np.sum((scores <= cut) & actual)), int(np.sum((scores <= cut) & ~actual)),
    )
    return Stage1Result(learner, smote_cfg is not None, tune is not None, cm, p, model, len(train), len(test), tuning)


# ---------------------------------------------------------------- stage 2


@dataclass(frozen=True)
class ModelFactory:
    """Picklable recipe that fits one backtest model on a training slice."""

    learner: str = "cart"
    params: tuple = ()  # sorted (name, value) pairs
    smote: SmoteConfig | None = None
    spike_threshold_ms: float = SPIKE_MS

    @classmethod
    def of(cls, learner: str = "cart", params: dict | None = None, smote: SmoteConfig | None = None, **kw):
        return cls(learner, tuple(sorted((params or {}).items())), smote, **kw)

    def __call__(self, train: Dataset, seed: int):
        sm = None
        if self.smote is not None:
            sm = SmoteConfig(self.smote.k, self.smote.percent, self.smote.spike_threshold_ms, seed)
        p = learners.make_params(self.learner, dict(self.params), seed=seed)
        return learners.fit(self.learner, oversample(train, sm), p, self.spike_threshold_ms)


@dataclass
class BacktestPair:
    i: int
    predicted_ms: float
    actual_ms: float
    model_ref: str


@dataclass
class BacktestReport:
    pairs: list[BacktestPair]
    L_hours: float
    window_minutes: int
    horizon_offsets: tuple[int, ...]
    train_span: int
    seed: int = 0
    models: dict = field(default_factory=dict, repr=False)

    @property
    def predicted(self) -> np.ndarray:
        return np.array([p.predicted_ms for p in self.pairs])

    @property
    def actual(self) -> np.ndarray:
        return np.array([p.actual_ms for p in self.pairs])


def train_span_windows(L_hours: float, window_minutes: int) -> int:
    return math.ceil(round(L_hours * 60.0 / window_minutes, 9))


def expected_pairs(n_windows: int, L_hours: float = 24, window_minutes: int = 10, horizon_min: int = 30) -> int:
    return max(0, n_windows - (train_span_windows(L_hours, window_minutes) + math.ceil(horizon_min / window_minutes)))


def pair_seed(master: int, i: int) -> int:
    return int(np.random.SeedSequence([master, i]).generate_state(1)[0])


def _run_pairs(frame, factory, span: int, seed: int, idx: Sequence[int], keep: bool):
    h = frame.horizon
    out = []
    for i in idx:
        # an example at w carries the label of w + h, which must stay inside the training windows
        train = frame.dataset(np.arange(i, i + span - h + 1))
        model = factory(train, pair_seed(seed, i))
        test_w = np.arange(i + span + 1, i + span + h + 1)
        pred = np.asarray(model.predict(frame.X[test_w - h]), dtype=float)
        pair = BacktestPair(i, float(pred.max()), float(frame.peak[test_w].max()), learners.digest(model))
        out.append((pair, model if keep else None))
    return out


def stage2_backtest(
    ws: WindowSeries,
    topo: Topology,
    lags: LagSpec = LagSpec(),
    factory: Callable = ModelFactory(),
    L_hours: float = 24,
    horizon_min: int = 30,
    seed: int = 0,
    pairs: Sequence[int] | None = None,
    n_jobs: int = 1,
    keep_models: bool = False,
) -> BacktestReport:
    """Train on windows ``[i, i + span]``, predict the next ``ceil(horizon/window)`` windows.

    Each test window ``j`` is predicted from the features of window
    ``j - h``; the pair's prediction and actual are maxima over its test windows.
    """
    frame = window_frame(ws, topo, lags, horizon_min)
    span = train_span_windows(L_hours, ws.window_minutes)
    h = frame.horizon
    if span + 1 - h < 1:
        raise ValueError(
            f"L={L_hours} h gives {span + 1} training windows; at least {h + 1} are needed for a "
            f"{horizon_min}-minute label without reading test windows"
        )
    n_pairs = max(0, ws.n_windows - (span + h))
    if n_pairs == 0:
        raise ValueError(f"{ws.n_windows} windows is too few: need at least {span + h + 1} for L={L_hours} h")
    idx = list(range(n_pairs)) if pairs is None else sorted(pairs)
    if idx and (idx[0] < 0 or idx[-1] >= n_pairs):
        raise IndexError(f"pair index out of range [0, {n_pairs})")
    if n_jobs > 1 and len(idx) > 1:
        chunks = [idx[k::n_jobs] for k in range(n_jobs)]
        with ProcessPoolExecutor(n_jobs) as ex:
            parts = ex.map(_run_pairs, *zip(*[(frame, factory, span, seed, c, keep_models) for c in chunks]))
            done = sorted((r for part in parts for r in part), key=lambda r: r[0].i)
    else:
        done = _run_pairs(frame, factory, span, seed, idx, keep_models)
    offsets = tuple(range(span + 1, span + h + 1))
    report = BacktestReport([p for p, _ in done], L_hours, ws.window_minutes, offsets, span, seed)
    if keep_models:
        report.models = {p.i: m for p, m in done}
    return report


# ---------------------------------------------------------------- sweep


@dataclass(frozen=True)
class SweepPoint:
    alarm_threshold_ms: float
    recall: float | None
    precision: float | None
    alarms: int


@dataclass
class SweepCurve:
    points: list[SweepPoint]
    spike_threshold_ms: float = SPIKE_MS

    def __post_init__(self):
        t = [p.alarm_threshold_ms for p in self.points]
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("sweep thresholds must be strictly increasing")

    def best(self, min_both: float) -> list[SweepPoint]:
        return [
            p for p in self.points
            if p.recall is not None and p.precision is not None and min(p.recall, p.precision) >= min_both
        ]


def default_thresholds(start: float = 370, stop: float = 490, step: float = 5) -> list[float]:
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(n)]


def threshold_sweep(
    r: BacktestReport | tuple[Sequence[float], Sequence[float]],
    thresholds: Sequence[float] | None = None,
    spike_threshold_ms: float = SPIKE_MS,
) -> SweepCurve:
    pred, act = (r.predicted, r.actual) if isinstance(r, BacktestReport) else map(np.asarray, r)
    if len(pred) == 0:
        raise ValueError("cannot sweep an empty backtest report")
    thresholds = default_thresholds() if thresholds is None else sorted(thresholds)
    pts = []
    for t in thresholds:
        cm = confusion(pred, act, spike_threshold_ms, t)
        pts.append(SweepPoint(float(t), cm.recall, cm.precision, cm.alarms))
    return SweepCurve(pts, spike_threshold_ms)


# ---------------------------------------------------------------- csv


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def write_report_csv(r: BacktestReport, path: str | Path, comments: Sequence[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(f"# L_hours={r.L_hours} window_minutes={r.window_minutes} "
                 f"horizon_offsets={','.join(map(str, r.horizon_offsets))} seed={r.seed}\n")
        fh.write("i,predicted_ms,actual_ms\n")
        for p in r.pairs:
            fh.write(f"{p.i},{p.predicted_ms!r},{p.actual_ms!r}\n")


def read_report_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        rows = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0] != "i,predicted_ms,actual_ms":
        raise ValueError(f"{path.name}: missing header i,predicted_ms,actual_ms")
    if len(rows) == 1:
        raise ValueError(f"{path.name}: backtest report has no pairs")
    body = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
    return body[:, 0].astype(int), body[:, 1], body[:, 2]


def sweep_csv_text(c: SweepCurve, comments: Sequence[str] = ()) -> str:
    """Undefined recall or precision is written as an empty field."""
    lines = [f"# {line}" for line in comments] + ["threshold_ms,recall,precision,alarms"]
    lines += [f"{p.alarm_threshold_ms:g},{_fmt(p.recall)},{_fmt(p.precision)},{p.alarms}" for p in c.points]
    return "\n".join(lines) + "\n"


def write_sweep_csv(c: SweepCurve, path: str | Path, comments: Sequence[str] = ()) -> None:
    Path(path).write_text(sweep_csv_text(c, comments), encoding="utf-8")
