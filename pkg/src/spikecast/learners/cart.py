"""Greedy variance-reduction regression trees."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..features import Dataset

# splits whose child SSE is within this relative distance of the best are ties
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CartParams:
    min_samples_split: float = 2
    max_depth: int | None = None

    def __post_init__(self):
        s = self.min_samples_split
        if not (s >= 2 or 0 < s <= 1):
            raise ValueError(f"min_samples_split={s}: use a count >= 2 or a fraction in (0, 1]")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    def resolve_min_split(self, n_rows: int) -> int:
        s = self.min_samples_split
        if isinstance(s, (int, np.integer)) or s > 1:
            return int(s)
        return math.ceil(s * n_rows)


@dataclass
class Leaf:
    prediction: float
    n: int


@dataclass
class Split:
    feature_index: int
    feature_name: str
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    n: int
    mean: float


TreeNode = Union[Leaf, Split]


def weighted_child_sse(y_left: np.ndarray, y_right: np.ndarray) -> float:
    return float(((y_left - y_left.mean()) ** 2).sum() + ((y_right - y_right.mean()) ** 2).sum())


def best_split(X: np.ndarray, y: np.ndarray, features: np.ndarray | None = None):
    """Lowest total child SSE over ``features`` (all by default) and midpoint thresholds.

    Returns ``(feature, threshold, sse)`` or ``None`` when every candidate
    feature is constant. Ties go to the lowest feature index, then the lowest
    threshold.
    """
    n = len(y)
    if features is None:
        features = np.arange(X.shape[1])
    if n < 2 or len(features) == 0:
        return None
    Xf = X[:, features]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    yc = y - y.mean()
    ys = yc[order]
    cs = np.cumsum(ys, axis=0)[:-1]
    cq = np.cumsum(ys * ys, axis=0)[:-1]
    tot, totq = cs[-1] + ys[-1], cq[-1] + ys[-1] ** 2
    nl = np.arange(1, n, dtype=float)[:, None]
    nr = n - nl
    sse = (cq - cs * cs / nl) + ((totq - cq) - (tot - cs) ** 2 / nr)
    valid = xs[1:] > xs[:-1]
    if not valid.any():
        return None
    sse = np.where(valid, sse, np.inf)
    best = sse.min()
    tol = _TIE_RTOL * max(float(totq.max()), 1.0)
    # feature-major scan so the first hit has the lowest feature, then lowest threshold
    hits = np.flatnonzero((sse <= best + tol).T.ravel())
    fpos, pos = divmod(int(hits[0]), n - 1)
    a, b = xs[pos, fpos], xs[pos + 1, fpos]
    thr = (a + b) / 2.0
    if not (a <= thr < b):
        thr = a
    return int(features[fpos]), float(thr), float(sse[pos, fpos])


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    layout: Sequence[str],
    min_split: int,
    max_depth: int | None,
    max_features: int | None = None,
    rng: np.random.Generator | None = None,
) -> TreeNode:
    d = X.shape[1]

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        yr = y[rows]
        n = len(rows)
        mean = float(yr.mean())
        if (max_depth is not None and depth >= max_depth) or n < max(min_split, 2) or np.all(yr == yr[0]):
            return Leaf(mean, n)
        feats = None
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, max_features, replace=False))
        found = best_split(X[rows], yr, feats)
        if found is None:
            return Leaf(mean, n)
        f, thr, _ = found
        go_left = X[rows, f] <= thr
        return Split(
            f, layout[f], thr,
            grow(rows[go_left], depth + 1),
            grow(rows[~go_left], depth + 1),
            n, mean,
        )

    return grow(np.arange(len(y)), 0)


def predict_node(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))

    def route(nd: TreeNode, rows: np.ndarray) -> None:
        if isinstance(nd, Leaf):
            out[rows] = nd.prediction
            return
        go_left = X[rows, nd.feature_index] <= nd.threshold
        if go_left.any():
            route(nd.left, rows[go_left])
        if not go_left.all():
            route(nd.right, rows[~go_left])

    route(node, np.arange(len(X)))
    return out


def _check_dims(X: np.ndarray, layout: Sequence[str]) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.shape[1] != len(layout):
        raise ValueError(f"feature vector has {X2.shape[1]} entries; model expects {len(layout)}")
    return X2


@dataclass
class RegressionTree:
    root: TreeNode
    layout: tuple[str, ...]
    params: CartParams

    def predict(self, x) -> float | np.ndarray:
        X2 = _check_dims(x, self.layout)
        out = predict_node(self.root, X2)
        return float(out[0]) if np.ndim(x) == 1 else out

    def depth(self) -> int:
        def dep(nd):
            return 0 if isinstance(nd, Leaf) else 1 + max(dep(nd.left), dep(nd.right))

        return dep(self.root)

    def n_leaves(self) -> int:
        def cnt(nd):
            return 1 if isinstance(nd, Leaf) else cnt(nd.left) + cnt(nd.right)

        return cnt(self.root)


def fit_cart(ds: Dataset, p: CartParams = CartParams()) -> RegressionTree:
    if len(ds) == 0:
        raise ValueError("cannot fit a tree to an empty dataset")
    root = build_tree(ds.X, ds.y, ds.layout, p.resolve_min_split(len(ds)), p.max_depth)
    return RegressionTree(root, ds.layout, p)
