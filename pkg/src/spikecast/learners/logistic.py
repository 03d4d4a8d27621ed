"""Logistic-regression spike classifier trained by full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import Dataset, apply_normalization


@dataclass(frozen=True)
class LogisticParams:
    epochs: int = 2000
    learning_rate: float = 0.5
    l2: float = 1e-3


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, t: np.ndarray, l2: float):
    """Mean binary cross-entropy plus ``l2/2 * |w|^2``, with its gradient."""
    z = X @ w + b
    # log(1 + e^z) - t z, stable for large |z|
    loss = np.mean(np.logaddexp(0.0, z) - t * z) + 0.5 * l2 * float(w @ w)
    r = sigmoid(z) - t
    return float(loss), X.T @ r / len(t) + l2 * w, float(r.mean())


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    normalization: np.ndarray
    layout: tuple[str, ...]
    spike_threshold_ms: float = 470.0
    decision_threshold: float = 0.5
    params: LogisticParams = LogisticParams()

    def predict(self, x) -> float | np.ndarray:
        X = np.asarray(x, dtype=float)
        X2 = X.reshape(1, -1) if X.ndim == 1 else X
        if X2.shape[1] != len(self.layout):
            raise ValueError(f"feature vector has {X2.shape[1]} entries; model expects {len(self.layout)}")
        p = sigmoid(apply_normalization(X2, self.normalization) @ self.weights + self.bias)
        return float(p[0]) if X.ndim == 1 else p


def fit_logistic(
    ds: Dataset, spike_threshold_ms: float = 470.0, p: LogisticParams = LogisticParams()
) -> LogisticModel:
    if ds.normalization is None:
        raise ValueError("fit_logistic expects a normalized dataset")
    t = (ds.y > spike_threshold_ms).astype(float)
    if t.min() == t.max():
        raise ValueError("logistic regression needs both spike and non-spike examples")
    w = np.zeros(ds.X.shape[1])
    b = 0.0
    for _ in range(p.epochs):
        _, gw, gb = loss_and_grad(w, b, ds.X, t, p.l2)
        w -= p.learning_rate * gw
        b -= p.learning_rate * gb
    if not np.isfinite(w).all():
        raise FloatingPointError("logistic weights diverged")
    return LogisticModel(w, b, ds.normalization, ds.layout, spike_threshold_ms, 0.5, p)
