"""JSON persistence and indented text rendering for fitted models."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .cart import CartParams, Leaf, RegressionTree, Split, TreeNode
from .forest import ForestModel, ForestParams
from .logistic import LogisticModel, LogisticParams

FORMAT_VERSION = 1


def _node_to_dict(nd: TreeNode) -> dict:
    if isinstance(nd, Leaf):
        return {"prediction": nd.prediction, "n": nd.n}
    return {
        "feature_index": nd.feature_index,
        "feature_name": nd.feature_name,
        "threshold": nd.threshold,
        "n": nd.n,
        "mean": nd.mean,
        "left": _node_to_dict(nd.left),
        "right": _node_to_dict(nd.right),
    }


def _node_from_dict(d: dict) -> TreeNode:
    if "prediction" in d:
        return Leaf(float(d["prediction"]), int(d["n"]))
    return Split(
        int(d["feature_index"]), d["feature_name"], float(d["threshold"]),
        _node_from_dict(d["left"]), _node_from_dict(d["right"]),
        int(d["n"]), float(d["mean"]),
    )


def model_to_dict(model) -> dict:
    if isinstance(model, RegressionTree):
        body = {"kind": "cart", "params": asdict(model.params), "tree": _node_to_dict(model.root)}
    elif isinstance(model, ForestModel):
        body = {
            "kind": "forest",
            "params": asdict(model.params),
            "seed": model.params.seed,
            "trees": [_node_to_dict(t.root) for t in model.trees],
        }
    elif isinstance(model, LogisticModel):
        body = {
            "kind": "logistic",
            "params": asdict(model.params),
            "weights": [float(v) for v in model.weights],
            "bias": float(model.bias),
            "normalization": model.normalization.tolist(),
            "spike_threshold_ms": model.spike_threshold_ms,
            "decision_threshold": model.decision_threshold,
        }
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return {"format": FORMAT_VERSION, **body, "layout": list(model.layout)}


def model_from_dict(d: dict):
    kind, layout = d.get("kind"), tuple(d["layout"])
    if kind == "cart":
        return RegressionTree(_node_from_dict(d["tree"]), layout, CartParams(**d["params"]))
    if kind == "forest":
        p = ForestParams(**d["params"])
        tp = p.tree_params()
        return ForestModel([RegressionTree(_node_from_dict(t), layout, tp) for t in d["trees"]], layout, p)
    if kind == "logistic":
        return LogisticModel(
            np.asarray(d["weights"], dtype=float), float(d["bias"]),
            np.asarray(d["normalization"], dtype=float), layout,
            float(d["spike_threshold_ms"]), float(d["decision_threshold"]),
            LogisticParams(**d["params"]),
        )
    raise ValueError(f"unknown model kind {kind!r}")


def dumps(model, **extra) -> str:
    return json.dumps({**model_to_dict(model), **extra}, indent=1, sort_keys=True)


def loads(text: str):
    return model_from_dict(json.loads(text))


def save_model(model, path: str | Path, **extra) -> None:
    Path(path).write_text(dumps(model, **extra) + "\n", encoding="utf-8")


def load_model(path: str | Path):
    return loads(Path(path).read_text(encoding="utf-8"))


def digest(model) -> str:
    """Short content hash of a model's canonical JSON."""
    canon = json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def export_tree(t: RegressionTree, spike_threshold_ms: float = 470.0) -> str:
    """One line per node; leaves predicting above the threshold get ``[SPIKE]``."""
    lines: list[str] = []

    def body(nd: TreeNode) -> str:
        if isinstance(nd, Leaf):
            tag = " [SPIKE]" if nd.prediction > spike_threshold_ms else ""
            return f"predict {nd.prediction:.1f} ms (n={nd.n}){tag}"
        return f"n={nd.n} mean={nd.mean:.1f} ms"

    def walk(nd: TreeNode, depth: int, cond: str | None) -> None:
        prefix = "|   " * (depth - 1) + "|-- " if depth else ""
        lines.append(prefix + (f"{cond}: " if cond else "") + body(nd))
        if isinstance(nd, Split):
            walk(nd.left, depth + 1, f"{nd.feature_name} <= {nd.threshold:.3f}")
            walk(nd.right, depth + 1, f"{nd.feature_name} > {nd.threshold:.3f}")

    walk(t.root, 0, None)
    return "\n".join(lines) + "\n"
