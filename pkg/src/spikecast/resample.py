"""SMOTE oversampling for a regression target, with minority defined by a label threshold."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .features import Dataset


class InsufficientMinorityError(ValueError):
    pass


@dataclass(frozen=True)
class SmoteConfig:
    k: int = 5
    percent: int = 50
    spike_threshold_ms: float = 470.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.percent <= 0:
            raise ValueError("percent must be > 0")


def minority_neighbors(Z: np.ndarray, k: int) -> np.ndarray:
    """Indices of each row's ``k`` nearest other rows (Euclidean; ties by index)."""
    sq = (Z * Z).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * Z @ Z.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote(ds: Dataset, cfg: SmoteConfig = SmoteConfig(), gaps: np.ndarray | None = None) -> Dataset:
    """Append ``ceil(percent/100 * m)`` synthetic minority rows.

    Distances use the dataset's (normalized) features; each synthetic row is
    ``p + g * (q - p)`` in joint feature/label space for a minority parent
    ``p`` and one of its ``k`` nearest minority neighbours ``q``. ``gaps``
    overrides the random ``g`` draws (one per synthetic row).
    """
    if ds.normalization is None:
        raise ValueError("smote expects a normalized dataset")
    minority = np.flatnonzero((ds.y > cfg.spike_threshold_ms) & ~ds.synthetic)
    m = len(minority)
    if m < 2:
        raise InsufficientMinorityError(
            f"{m} example(s) above {cfg.spike_threshold_ms} ms; at least 2 are needed"
        )
    k = cfg.k
    if k >= m:
        warnings.warn(f"smote: k={k} >= minority count {m}; using k={m - 1}", stacklevel=2)
        k = m - 1
    n_new = math.ceil(cfg.percent / 100 * m)
    rng = np.random.default_rng(cfg.seed)

    Xm, ym = ds.X[minority], ds.y[minority]
    nbrs = minority_neighbors(Xm, k)
    full, rest = divmod(n_new, m)
    parents = np.concatenate((np.repeat(np.arange(m), full), np.sort(rng.choice(m, rest, replace=False))))
    picks = nbrs[parents, rng.integers(0, k, size=n_new)]
    g = 1.0 - rng.random(n_new) if gaps is None else np.broadcast_to(np.asarray(gaps, float), (n_new,))

    Xs = Xm[parents] + g[:, None] * (Xm[picks] - Xm[parents])
    ys = ym[parents] + g * (ym[picks] - ym[parents])
    return replace(
        ds,
        at=np.concatenate((ds.at, ds.at[minority][parents])),
        X=np.vstack((ds.X, Xs)),
        y=np.concatenate((ds.y, ys)),
        synthetic=np.concatenate((ds.synthetic, np.ones(n_new, dtype=bool))),
    )
