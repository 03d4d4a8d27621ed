"""Bagged regression trees with per-split feature subsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..features import Dataset
from .cart import CartParams, RegressionTree, _check_dims, build_tree, predict_node


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 10
    min_samples_split: float = 2
    max_depth: int | None = None
    seed: int = 0
    bootstrap: bool = True
    max_features: int | None = None  # None: ceil(sqrt(d))

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        CartParams(self.min_samples_split, self.max_depth)

    def tree_params(self) -> CartParams:
        return CartParams(self.min_samples_split, self.max_depth)


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    layout: tuple[str, ...]
    params: ForestParams

    def predict_members(self, x) -> np.ndarray:
        X2 = _check_dims(x, self.layout)
        return np.stack([predict_node(t.root, X2) for t in self.trees])

    def predict(self, x) -> float | np.ndarray:
        out = self.predict_members(x).mean(axis=0)
        return float(out[0]) if np.ndim(x) == 1 else out


def tree_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def fit_tree_member(ds: Dataset, p: ForestParams, seq: np.random.SeedSequence) -> RegressionTree:
    rng = np.random.default_rng(seq)
    n, d = ds.X.shape
    rows = rng.integers(0, n, size=n) if p.bootstrap else np.arange(n)
    k = p.max_features if p.max_features is not None else math.ceil(math.sqrt(d))
    tp = p.tree_params()
    root = build_tree(ds.X[rows], ds.y[rows], ds.layout, tp.resolve_min_split(n), tp.max_depth, min(k, d), rng)
    return RegressionTree(root, ds.layout, tp)


def fit_forest(ds: Dataset, p: ForestParams = ForestParams()) -> ForestModel:
    if len(ds) == 0:
        raise ValueError("cannot fit a forest to an empty dataset")
    trees = [fit_tree_member(ds, p, s) for s in tree_seeds(p.seed, p.n_estimators)]
    return ForestModel(trees, ds.layout, p)
