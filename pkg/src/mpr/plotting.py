"""Figures rendered next to the CSV reports (PNG, Agg backend)."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def new_figure(width=5.0, height=None, **kw):
    height = width * GOLDEN if height is None else height
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(width, height), **kw)
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(_RC):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_visualization_matrix(decisions, gt, tol: int, n: int, l: int, path) -> Path:
    """Query x database plane: ground-truth band in green, results in red."""
    fig, ax = new_figure(5.0, 5.0 * n / max(l, 1) if l else 5.0)
    band_q, band_d = [], []
    for d in decisions:
        truth = gt[d.query_index]
        for j in range(max(0, truth - tol), min(l - 1, truth + tol) + 1):
            band_q.append(d.query_index)
            band_d.append(j)
    ax.scatter(band_d, band_q, s=2, c="tab:green", marker="s", linewidths=0, label="ground truth")
    ok = [d for d in decisions if d.accepted]
    rej = [d for d in decisions if not d.accepted]
    ax.scatter([d.best_db_index for d in ok], [d.query_index for d in ok], s=4, c="tab:red", label="result")
    if rej:
        ax.scatter([d.best_db_index for d in rej], [d.query_index for d in rej], s=4, facecolors="none",
                   edgecolors="tab:gray", linewidths=0.5, label="rejected")
    ax.set_xlim(-0.5, l - 0.5)
    ax.set_ylim(n - 0.5, -0.5)
    ax.set_xlabel("database index")
    ax.set_ylabel("query index")
    ax.legend(loc="lower left", frameon=False)
    return save(fig, path)


def plot_sweep(result, path) -> Path:
    """Metric curves against the swept value; a precision-recall curve for thresholds."""
    if result.parameter == "threshold_t":
        fig, ax = new_figure()
        p = [m.precision for m in result.metrics]
        r = [m.recall for m in result.metrics]
        ax.plot(r, p, "o-", ms=3)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        return save(fig, path)
    fig, ax = new_figure()
    x = result.values
    for attr in ("precision", "recall", "f1"):
        ax.plot(x, [getattr(m, attr) for m in result.metrics], "o-", ms=3, label=attr)
    ax.set_xlabel(result.parameter)
    ax.set_ylim(0, 1.02)
    err = ax.twinx()
    err.plot(x, [m.mean_error for m in result.metrics], "k--", lw=1, label="mean error")
    err.set_ylabel("mean error (frames)")
    ax.legend(loc="lower left", frameon=False)
    return save(fig, path)


def plot_fitness_traces(traces: Sequence[Sequence[float]], path) -> Path:
    fig, ax = new_figure()
    for trace in traces:
        ax.plot(np.arange(len(trace)), trace, lw=0.8, alpha=0.8)
    ax.set_xlabel("generation")
    ax.set_ylabel("best F1")
    return save(fig, path)


def plot_timing(extraction_ms: Sequence[float], matching_ms: Sequence[float], path) -> Path:
    fig, ax = new_figure()
    idx = np.arange(len(extraction_ms))
    ax.bar(idx, extraction_ms, width=1.0, label="descriptor extraction")
    ax.bar(idx, matching_ms, width=1.0, bottom=extraction_ms, label="matching")
    ax.set_xlabel("query frame")
    ax.set_ylabel("ms")
    ax.legend(frameon=False)
    return save(fig, path)
