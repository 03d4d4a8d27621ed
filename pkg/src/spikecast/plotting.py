"""Figures written next to the CSV reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _size(scale: float = 1.0, ratio: float = 0.62) -> tuple[float, float]:
    w = 6.0 * scale
    return w, w * ratio


def plot_sweep(curve, path: str | Path, title: str | None = None) -> Path:
    """Recall and precision against the alarm threshold."""
    xs = [p.alarm_threshold_ms for p in curve.points]
    rec = [np.nan if p.recall is None else p.recall for p in curve.points]
    prec = [np.nan if p.precision is None else p.precision for p in curve.points]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size())
        ax.plot(xs, rec, "o-", ms=3, label="recall")
        ax.plot(xs, prec, "s-", ms=3, label="precision")
        ax.set_xlabel("alarm threshold (ms)")
        ax.set_ylabel("rate")
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        ax.legend(loc="lower left")
        ax.set_title(title or f"spike = response > {curve.spike_threshold_ms:g} ms")
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def plot_backtest(report, path: str | Path, spike_threshold_ms: float = 470.0, alarm_threshold_ms: float | None = None) -> Path:
    """Predicted vs actual half-hour maxima along the backtest."""
    i = np.array([p.i for p in report.pairs])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(1.4, 0.4))
        ax.plot(i, report.actual, lw=0.7, color="0.5", label="actual max")
        ax.plot(i, report.predicted, lw=0.9, label="predicted max")
        ax.axhline(spike_threshold_ms, color="tab:red", lw=0.8, ls="--", label="spike threshold")
        if alarm_threshold_ms is not None:
            ax.axhline(alarm_threshold_ms, color="tab:orange", lw=0.8, ls=":", label="alarm threshold")
        ax.set_xlabel("pair index i (window)")
        ax.set_ylabel("response (ms)")
        ax.legend(loc="upper right", ncol=2)
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
