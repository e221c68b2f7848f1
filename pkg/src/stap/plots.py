"""Report figures, rendered off-screen to image files next to the JSON/CSV output."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

from .bench import BenchResult
from .evaluation import EvalReport
from .model import ANOMALY_ORDER
from .orchestrator import RunReport

LABEL_COLORS = {
    "fight": "#d62728",
    "gunshot": "#9467bd",
    "fire": "#ff7f0e",
    "normal": "#7f7f7f",
}


def _save(fig: Figure, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def plot_run_latencies(report: RunReport, path: str | os.PathLike) -> Path:
    """Per-window end-to-end latency, markers coloured by predicted label."""
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot(111)
    preds = report.predictions
    x = [p.window_index for p in preds]
    y = [p.latency_ms.get("end_to_end", 0.0) for p in preds]
    ax.plot(x, y, color="0.6", lw=1, zorder=1)
    for label in ANOMALY_ORDER:
        pts = [(a, b) for a, b, p in zip(x, y, preds) if p.label is label]
        if pts:
            xs, ys = zip(*pts)
            ax.scatter(xs, ys, s=18, color=LABEL_COLORS[label.value], label=label.title, zorder=2)
    if y:
        ax.axhline(report.mean_latency_ms, ls="--", lw=1, color="k",
                   label=f"mean {report.mean_latency_ms:.0f} ms")
        ax.legend(fontsize=8, loc="best")
    for g in report.gaps:
        ax.axvline(g.window_index, color="r", alpha=0.3, lw=4)
    ax.set_xlabel("window index")
    ax.set_ylabel("latency (ms)")
    ax.set_title(f"{report.mode} run: per-window latency")
    return _save(fig, path)


def plot_confusion(report: EvalReport, path: str | os.PathLike) -> Path:
    pct = report.confusion_row_pct
    names = [c.title for c in report.classes]
    fig = Figure(figsize=(4.5, 4))
    ax = fig.add_subplot(111)
    im = ax.imshow(pct, vmin=0, vmax=100, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    ax.set_xticks(range(len(names)), names, rotation=30)
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("Truth")
    for i, j in np.ndindex(pct.shape):
        ax.text(j, i, f"{pct[i, j]:.1f}", ha="center", va="center",
                color="white" if pct[i, j] > 60 else "black", fontsize=8)
    m = report.metrics()
    ax.set_title(f"acc {m['accuracy']:.2f}%  F1 {m['f1']:.2f}%", fontsize=9)
    return _save(fig, path)


def plot_bench(result: BenchResult, path: str | os.PathLike) -> Path:
    """Mean per-window latency per mode and repeat, against the composition model."""
    summary = result.summary()
    modes = list(summary)
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot(111)
    for i, mode in enumerate(modes):
        rows = result.rows_for(mode)
        ax.bar(i, summary[mode]["mean_ms"], width=0.6, alpha=0.6, label=f"{mode} mean")
        ax.scatter([i] * len(rows), [r.mean_ms for r in rows], color="k", s=10, zorder=3)
        ax.hlines(summary[mode]["modeled_ms"], i - 0.35, i + 0.35, colors="r", linestyles="--")
    ax.set_xticks(range(len(modes)), modes)
    ax.set_ylabel("per-window latency (ms)")
    ax.set_title("measured (bars, dots) vs modeled (dashed)")
    return _save(fig, path)
