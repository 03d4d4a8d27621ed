"""Differential evolution (rand/1/bin) over learner hyperparameters.

Candidates are scored by ``(recall, precision)`` compared lexicographically,
so recall dominates and precision only breaks recall ties.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import learners
from .features import Dataset, denormalize, normalize
from .resample import InsufficientMinorityError, SmoteConfig, smote

log = logging.getLogger(__name__)

Score = tuple[float, float]
FAILED: Score = (-math.inf, -math.inf)


@dataclass(frozen=True)
class DEConfig:
    np: int = 20
    f: float = 0.75
    cr: float = 0.3
    gen: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.np < 4:
            raise ValueError("population size np must be >= 4")
        if not self.f > 0:
            raise ValueError("differential weight f must be > 0")
        if not 0.0 <= self.cr <= 1.0:
            raise ValueError("crossover probability cr must be in [0, 1]")
        if self.gen < 1:
            raise ValueError("gen must be >= 1")


@dataclass(frozen=True)
class ParamDim:
    name: str
    lower: float
    upper: float
    kind: str = "continuous"  # continuous | integer | split

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower bound must be below upper bound")
        if self.kind not in ("continuous", "integer", "split"):
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def decode(self, v: float):
        if self.kind == "integer":
            return int(round(v))
        if self.kind == "split":
            # (0, 1] is a fraction of rows, above that a row count of at least 2
            return float(v) if v <= 1.0 else max(2, int(round(v)))
        return float(v)


@dataclass(frozen=True)
class ParamSpace:
    dims: tuple[ParamDim, ...]

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims])

    def decode(self, values: Sequence[float]) -> dict:
        return {d.name: d.decode(v) for d, v in zip(self.dims, values)}

    def clip(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)


CART_SPACE = ParamSpace((
    ParamDim("min_samples_split", 0.01, 20.0, "split"),
    ParamDim("max_depth", 1, 20, "integer"),
))
FOREST_SPACE = ParamSpace((
    ParamDim("n_estimators", 10, 50, "integer"),
    ParamDim("min_samples_split", 0.01, 20.0, "split"),
    ParamDim("max_depth", 1, 20, "integer"),
))
DEFAULT_SPACES = {"cart": CART_SPACE, "forest": FOREST_SPACE}


@dataclass
class Candidate:
    values: np.ndarray
    score: Score = FAILED


@dataclass
class DEResult:
    best: Candidate
    params: dict
    trace: list[Score]  # best score after initialisation, then after each generation
    evaluations: int
    failures: list[tuple[list[float], str]] = field(default_factory=list)

    def report(self) -> dict:
        def fin(s):
            return [v if math.isfinite(v) else None for v in s]

        return {
            "best_params": self.params,
            "best_score": {"recall": fin(self.best.score)[0], "precision": fin(self.best.score)[1]},
            "per_generation_best": [{"recall": fin(s)[0], "precision": fin(s)[1]} for s in self.trace],
            "evaluations": self.evaluations,
            "failures": [{"values": v, "error": e} for v, e in self.failures],
        }

    def write_report(self, path: str | Path, **extra) -> None:
        Path(path).write_text(json.dumps({**self.report(), **extra}, indent=1) + "\n", encoding="utf-8")


def mutate_crossover(
    x: Candidate, a: Candidate, b: Candidate, c: Candidate,
    cfg: DEConfig, rng: np.random.Generator, space: ParamSpace | None = None,
    forced: int | None = None,
) -> Candidate:
    """Binomial crossover of ``x`` with the mutant ``a + f * (b - c)``."""
    d = len(x.values)
    j = int(rng.integers(d)) if forced is None else forced
    take = rng.random(d) < cfg.cr
    take[j] = True
    mutant = a.values + cfg.f * (b.values - c.values)
    if space is not None:
        mutant = space.clip(mutant)
    return Candidate(np.where(take, mutant, x.values))


def optimize(space: ParamSpace, objective: Callable[[dict], Score], cfg: DEConfig = DEConfig()) -> DEResult:
    rng = np.random.default_rng(cfg.seed)
    lo, hi = space.lower, space.upper
    failures: list[tuple[list[float], str]] = []
    evals = 0

    def score(values: np.ndarray) -> Score:
        nonlocal evals
        evals += 1
        try:
            r, p = objective(space.decode(values))
            return (float(r), float(p))
        except Exception as e:  # a bad candidate must not end the search
            log.warning("objective failed for %s: %s", space.decode(values), e)
            failures.append(([float(v) for v in values], f"{type(e).__name__}: {e}"))
            return FAILED

    pop = [Candidate(v) for v in lo + rng.random((cfg.np, len(space.dims))) * (hi - lo)]
    for cand in pop:
        cand.score = score(cand.values)

    def best_of(p: list[Candidate]) -> Candidate:
        return max(p, key=lambda c: c.score)  # max keeps the first of equals

    trace = [best_of(pop).score]
    for _ in range(cfg.gen):
        trials = []
        for i, x in enumerate(pop):
            others = [k for k in range(cfg.np) if k != i]
            ia, ib, ic = rng.choice(others, 3, replace=False)
            trials.append(mutate_crossover(x, pop[ia], pop[ib], pop[ic], cfg, rng, space))
        for t in trials:
            t.score = score(t.values)
        # synchronous replacement, identical to scoring the trials in parallel
        pop = [t if t.score > x.score else x for x, t in zip(pop, trials)]
        trace.append(best_of(pop).score)
    best = best_of(pop)
    return DEResult(best, space.decode(best.values), trace, evals, failures)


def recall_precision(pred_alarm: np.ndarray, actual_spike: np.ndarray) -> tuple[float | None, float | None]:
    tp = int(np.sum(pred_alarm & actual_spike))
    pos, alarms = int(actual_spike.sum()), int(pred_alarm.sum())
    return (tp / pos if pos else None, tp / alarms if alarms else None)


def oversample(train: Dataset, cfg: SmoteConfig | None) -> Dataset:
    """SMOTE in normalized space, returned on the raw feature scale.

    Slices with fewer than two spikes are returned unchanged.
    """
    if cfg is None:
        return train
    try:
        return denormalize(smote(normalize(train), cfg))
    except InsufficientMinorityError:
        return train


def tune_learner(
    train: Dataset,
    space: ParamSpace | None,
    learner_kind: str,
    cfg: DEConfig = DEConfig(),
    spike_threshold_ms: float = 470.0,
    smote_cfg: SmoteConfig | None = SmoteConfig(),
    fixed: dict | None = None,
) -> DEResult:
    """Tune on ``train`` alone: fit on its first 80%, score on its last 20%."""
    space = space or DEFAULT_SPACES.get(learner_kind)
    if space is None:
        raise ValueError(f"no default search space for learner {learner_kind!r}")
    fit_part, val_part = train.split(0.8)
    actual = val_part.y > spike_threshold_ms
    if not actual.any():
        raise ValueError(
            "internal validation slice (last 20% of training data) has no spikes; use a longer training window"
        )
    fit_part = oversample(fit_part, smote_cfg)

    def objective(values: dict) -> Score:
        params = learners.make_params(learner_kind, {**(fixed or {}), **values}, seed=cfg.seed)
        model = learners.fit(learner_kind, fit_part, params, spike_threshold_ms)
        scores, cut = learners.alarm_scores(model, val_part.X, spike_threshold_ms)
        r, p = recall_precision(scores > cut, actual)
        return (r or 0.0, p or 0.0)

    return optimize(space, objective, cfg)
