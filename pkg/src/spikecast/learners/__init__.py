"""From-scratch learners: regression trees, forests and a logistic baseline."""

from __future__ import annotations

from dataclasses import fields

from ..features import Dataset, normalize
from .cart import CartParams, Leaf, RegressionTree, Split, fit_cart
from .forest import ForestModel, ForestParams, fit_forest
from .logistic import LogisticModel, LogisticParams, fit_logistic
from .persist import digest, dumps, export_tree, load_model, loads, save_model

LEARNERS = ("cart", "forest", "logistic")
_PARAMS = {"cart": CartParams, "forest": ForestParams, "logistic": LogisticParams}


class UnsupportedLearnerError(ValueError):
    pass


def make_params(kind: str, values: dict | None = None, seed: int = 0):
    if kind not in _PARAMS:
        raise UnsupportedLearnerError(f"unsupported learner {kind!r}; choose from {', '.join(LEARNERS)}")
    cls = _PARAMS[kind]
    names = {f.name for f in fields(cls)}
    values = dict(values or {})
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    if kind == "forest":
        values.setdefault("seed", seed)
    return cls(**values)


def fit(kind: str, ds: Dataset, params=None, spike_threshold_ms: float = 470.0):
    """Fit any learner on raw (unnormalized) features."""
    params = params if params is not None else make_params(kind)
    if kind == "cart":
        return fit_cart(ds, params)
    if kind == "forest":
        return fit_forest(ds, params)
    if kind == "logistic":
        return fit_logistic(normalize(ds), spike_threshold_ms, params)
    raise UnsupportedLearnerError(f"unsupported learner {kind!r}")


def alarm_scores(model, X, alarm_threshold_ms: float = 470.0):
    """(scores, cutoff): scores above cutoff raise an alarm."""
    if isinstance(model, LogisticModel):
        return model.predict(X), model.decision_threshold
    return model.predict(X), alarm_threshold_ms


__all__ = [
    "CartParams", "ForestModel", "ForestParams", "LEARNERS", "Leaf", "LogisticModel",
    "LogisticParams", "RegressionTree", "Split", "UnsupportedLearnerError", "alarm_scores",
    "digest", "dumps", "export_tree", "fit", "fit_cart", "fit_forest", "fit_logistic",
    "load_model", "loads", "make_params", "save_model",
]
