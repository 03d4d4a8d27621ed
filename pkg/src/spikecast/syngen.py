"""Synthetic multi-node telemetry with long-tailed marginals and injected response spikes.

Baseline metrics follow log-normal AR(1) processes whose medians and upper
quartiles match production percentiles. Spikes come in two kinds:
``buildup`` spikes are preceded by a 30-60 minute climb in the target's
response time and by error/apdex degradation in a few designated upstream
("causal") nodes; ``sudden`` spikes arrive with no precursor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .telemetry import METRICS, SeriesStore, TelemetryError, Topology

# min, p25, p50, p75, max per metric of the monitored production data
PERCENTILE_TARGETS: dict[str, tuple[float, float, float, float, float]] = {
    "errors_per_min": (0.0, 0.12, 1.72, 3.88, 347.0),
    "apdex": (0.53, 0.96, 0.97, 0.97, 0.99),
    "memory_mb": (67800.0, 105000.0, 107000.0, 111000.0, 272000.0),
    "throughput": (2.83, 15.90, 35.60, 102.0, 243.0),
}

UPSTREAM_NAMES = (
    "ret", "lo", "sh-synr", "auth", "srch", "cat", "idx",
    "meta", "rend", "sess", "cache", "lnk", "ntf",
)
TARGET_NAME = "ndoc"
# 2018-11-01T00:00Z in epoch minutes
EPOCH_START = 25_683_840

_Z75 = 0.6744897501960817  # standard normal upper quartile

SPIKE_MINUTES = (10, 30)
RAMP_MINUTES = (30, 60)
# spike plateau height as a multiple of the spike threshold
SPIKE_PEAK = (1.1, 2.6)
# how long upstream degradation precedes the target's climb
UPSTREAM_LEAD_MINUTES = (15, 30)
# e-folding times (minutes before the spike) of the target climb and upstream surge
RAMP_TAU = 20.0
UPSTREAM_TAU = 30.0


def _approach(minutes: int, tau: float) -> np.ndarray:
    """Profile rising toward 1 at the spike, shaped by time remaining rather than elapsed."""
    remaining = np.arange(minutes, 0, -1) - 1
    return np.exp(-remaining / tau)


@dataclass
class GenConfig:
    days: int = 7
    seed: int = 0
    n_upstream: int = 13
    spike_rate: float = 0.034
    buildup_fraction: float = 0.5
    spike_threshold_ms: float = 470.0
    percentile_targets: dict = field(default_factory=lambda: dict(PERCENTILE_TARGETS))
    baseline_rt_ms: float = 180.0
    upstream_rt_ms: float = 90.0

    def __post_init__(self):
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if not 0.0 < self.spike_rate < 1.0:
            raise ValueError("spike_rate must be in (0, 1)")
        if not 0.0 <= self.buildup_fraction <= 1.0:
            raise ValueError("buildup_fraction must be in [0, 1]")
        if self.n_upstream < 1:
            raise ValueError("n_upstream must be >= 1")


@dataclass(frozen=True)
class SpikeEvent:
    start: int  # epoch minute of the first spike minute
    duration: int
    kind: str  # "buildup" | "sudden"
    causal_nodes: tuple[str, ...]
    ramp_minutes: int = 0


@dataclass
class SyntheticSeries:
    store: SeriesStore
    topology: Topology
    truth: list[SpikeEvent]


def default_topology(n_upstream: int = 13) -> Topology:
    names = list(UPSTREAM_NAMES[:n_upstream])
    names += [f"svc{k}" for k in range(len(names), n_upstream)]
    return Topology(TARGET_NAME, tuple(names))


def lognormal_fit(p50: float, p75: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal whose median and upper quartile are given."""
    mu = np.log(p50)
    sigma = (np.log(p75) - mu) / _Z75 if p75 > p50 else 0.05
    return mu, sigma


def _ar1_normal(rng: np.random.Generator, n: int, phi: float = 0.8) -> np.ndarray:
    """Unit-variance stationary AR(1) path."""
    e = rng.standard_normal(n) * np.sqrt(1.0 - phi * phi)
    e[0] = rng.standard_normal()
    return lfilter([1.0], [1.0, -phi], e)


def _lognormal_series(rng, n, p50, p75, lo, hi) -> np.ndarray:
    mu, sigma = lognormal_fit(p50, p75)
    return np.clip(np.exp(mu + sigma * _ar1_normal(rng, n)), lo, hi)


def _apdex_from_rt(rt: np.ndarray, median_rt: float, rng, lo=0.53, hi=0.99) -> np.ndarray:
    # decreasing in latency; ~0.97-0.98 at the median
    ratio = rt / (4.0 * median_rt)
    return np.clip(0.995 - 0.25 * ratio**2 + rng.normal(0.0, 0.004, rt.shape), lo, hi)


def _schedule(cfg: GenConfig, rng, n: int, upstream: tuple[str, ...]) -> list[tuple]:
    """Spike placements as (offset, duration, kind, causal, ramp)."""
    durations_mean = sum(SPIKE_MINUTES) / 2
    n_events = max(1, int(round(cfg.spike_rate * n / durations_mean)))
    slot = n // n_events
    n_causal = int(rng.integers(1, min(3, len(upstream)) + 1))
    causal_set = tuple(sorted(str(x) for x in rng.choice(upstream, size=n_causal, replace=False)))
    events = []
    for k in range(n_events):
        dur = int(rng.integers(SPIKE_MINUTES[0], SPIKE_MINUTES[1] + 1))
        buildup = rng.random() < cfg.buildup_fraction
        ramp = int(rng.integers(RAMP_MINUTES[0], RAMP_MINUTES[1] + 1)) if buildup else 0
        lo = k * slot + 120
        hi = (k + 1) * slot - dur - 30
        if hi <= lo:
            dur = max(1, min(dur, slot - 121))
            hi = lo + 1
        start = int(rng.integers(lo, hi))
        causal = causal_set if buildup else ()
        events.append((start, dur, "buildup" if buildup else "sudden", causal, ramp))
    return events


def generate(cfg: GenConfig) -> SyntheticSeries:
    rng = np.random.default_rng(cfg.seed)
    topo = default_topology(cfg.n_upstream)
    n = cfg.days * 1440
    tgt = cfg.percentile_targets
    minute_of_day = np.arange(n) % 1440
    diurnal = 1.0 + 0.12 * np.sin(2 * np.pi * (minute_of_day - 480) / 1440)

    def node_metrics(median_rt: float, rt_sigma: float) -> np.ndarray:
        rt = median_rt * diurnal * np.exp(rt_sigma * _ar1_normal(rng, n))
        cols = {"response_ms": rt}
        for m in ("errors_per_min", "memory_mb", "throughput"):
            lo, _, p50, p75, hi = tgt[m]
            cols[m] = _lognormal_series(rng, n, p50, p75, lo, hi)
        lo, hi = tgt["apdex"][0], tgt["apdex"][-1]
        cols["apdex"] = _apdex_from_rt(rt, median_rt, rng, lo, hi)
        return np.column_stack([cols[m] for m in METRICS])

    data = {topo.target: node_metrics(cfg.baseline_rt_ms, 0.18)}
    for name in topo.upstream:
        data[name] = node_metrics(cfg.upstream_rt_ms * float(rng.uniform(0.6, 1.6)), 0.2)

    # keep the baseline strictly below the spike threshold
    target = data[topo.target]
    target[:, 0] = np.minimum(target[:, 0], 0.8 * cfg.spike_threshold_ms)

    truth = []
    thr = cfg.spike_threshold_ms
    ee_hi = tgt["errors_per_min"][-1]
    ap_lo, ap_hi = tgt["apdex"][0], tgt["apdex"][-1]
    for start, dur, kind, causal, ramp in _schedule(cfg, rng, n, topo.upstream):
        end = min(n, start + dur)
        if kind == "buildup":
            r0 = start - ramp
            frac = _approach(ramp, RAMP_TAU)
            level = rng.uniform(0.8, 0.95) * thr
            base = target[r0:start, 0]
            target[r0:start, 0] = base + (level - base).clip(min=0) * frac
            # upstream trouble leads the target's climb
            lead = int(rng.integers(UPSTREAM_LEAD_MINUTES[0], UPSTREAM_LEAD_MINUTES[1] + 1))
            u0 = max(0, r0 - lead)
            # the upstream fault clears as the target's backlog turns into the spike
            prof = _approach(start - u0, UPSTREAM_TAU)
            for node in causal:
                arr = data[node]
                peak = rng.uniform(30.0, 80.0)
                span = slice(u0, start)
                arr[span, 1] = np.minimum(arr[span, 1] + peak * prof, ee_hi)
                arr[span, 0] *= 1.0 + 1.5 * prof
                arr[span, 4] = np.clip(arr[span, 4] - 0.25 * prof, ap_lo, ap_hi)
        peak_rt = rng.uniform(*SPIKE_PEAK) * thr
        shape = np.exp(rng.normal(0.0, 0.12, end - start))
        target[start:end, 0] = np.maximum(peak_rt * shape, thr + 10.0)
        truth.append(SpikeEvent(EPOCH_START + start, end - start, kind, causal, ramp))
    target[:, 4] = _apdex_from_rt(target[:, 0], cfg.baseline_rt_ms, rng, ap_lo, ap_hi)

    # csv round-trip precision, so generated and re-ingested stores agree
    for arr in data.values():
        np.round(arr, 4, out=arr)
    store = SeriesStore(EPOCH_START, data)
    return SyntheticSeries(store, topo, truth)


@dataclass(frozen=True)
class FivePoint:
    min: float
    p25: float
    p50: float
    p75: float
    max: float


def describe(store: SeriesStore) -> dict[str, dict[str, FivePoint]]:
    if not store.data or store.n_minutes == 0:
        raise TelemetryError("cannot describe an empty store")
    out = {}
    for node, arr in store.data.items():
        q = np.percentile(arr, [0, 25, 50, 75, 100], axis=0, method="linear")
        out[node] = {m: FivePoint(*map(float, q[:, j])) for j, m in enumerate(METRICS)}
    return out


def write_truth(truth: list[SpikeEvent], path: str | Path, comments: Sequence[str] = ()) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_min", "kind", "causal_nodes"])
        for ev in truth:
            w.writerow([ev.start, ev.kind, ";".join(ev.causal_nodes)])


def read_truth(path: str | Path) -> list[tuple[int, str, tuple[str, ...]]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    return [
        (int(r["timestamp_min"]), r["kind"], tuple(x for x in r["causal_nodes"].split(";") if x))
        for r in rows
    ]
