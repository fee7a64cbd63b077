"""Figures written next to the delimited reports.

Uses the object-oriented ``Figure`` API so nothing touches global pyplot
state and no display backend is needed.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

from matplotlib.figure import Figure

from avgen.evaluation import METRICS, CostReport, CrossEvalMatrix, EvalReport

DPI = 150


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # Drop the software/date metadata so reruns produce identical files.
    fig.savefig(path, dpi=DPI, metadata={"Software": None} if path.suffix == ".png" else None)
    return path


def plot_cross_eval(matrix: CrossEvalMatrix, path) -> Path:
    n = len(matrix.names)
    fig = Figure(figsize=(1.6 * n + 1.5, 1.4 * n + 1))
    ax = fig.add_subplot()
    im = ax.imshow(matrix.cells, cmap="Blues", vmin=0, vmax=100)
    ax.set_xticks(range(n), labels=matrix.names)
    ax.set_yticks(range(n), labels=matrix.names)
    ax.set_xlabel("evaluated on")
    ax.set_ylabel("trained on")
    for i, row in enumerate(matrix.cells):
        for j, v in enumerate(row):
            ax.text(j, i, f"{v:.2f}", ha="center", va="center", color="white" if v > 60 else "black")
    fig.colorbar(im, ax=ax, label="F1 (%)")
    return _save(fig, path)


def plot_cost_report(report: CostReport, path) -> Path:
    names = list(report.normalized)
    fig = Figure(figsize=(7, 3.5))
    ax = fig.add_subplot()
    width = 0.8 / max(len(names), 1)
    for k, name in enumerate(names):
        vals = [report.normalized[name][m] or 0.0 for m in METRICS]
        xs = [i + (k - (len(names) - 1) / 2) * width for i in range(len(METRICS))]
        ax.bar(xs, vals, width, label=name)
    ax.axhline(1.0, color="grey", lw=0.8, ls="--")
    ax.set_xticks(range(len(METRICS)), labels=[m.replace("_", " ") for m in METRICS])
    ax.set_ylabel("relative to end2end (x)")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_scores(reports: Mapping[str, EvalReport], path) -> Path:
    names = list(reports)
    fig = Figure(figsize=(max(4, 1.5 * len(names) + 2), 3.5))
    ax = fig.add_subplot()
    width = 0.25
    for k, metric in enumerate(("precision", "recall", "f1")):
        vals = [100 * getattr(reports[n], metric) for n in names]
        ax.bar([i + (k - 1) * width for i in range(len(names))], vals, width, label=metric)
    ax.set_xticks(range(len(names)), labels=names)
    ax.set_ylim(0, 100)
    ax.set_ylabel("%")
    ax.legend(frameon=False, ncols=3, loc="lower center")
    return _save(fig, path)
