"""Matplotlib figure rendering for the report path.

Figures visualize the current run's data next to the delimited output;
they are a presentation layer only and nothing downstream consumes them.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_METRIC_ORDER = ("unc_rate", "accuracy", "conservativeness", "overconfidence", "alignment")
_METRIC_LABELS = ("Unc-rate", "Acc", "Conserv.", "Overconf.", "Alignment")


def boundary_metrics_figure(
    rows: Sequence[tuple[str, Mapping[str, float]]], path: str | Path
) -> Path:
    """Grouped bars of the five boundary scores, one group per run."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(rows)), 4.0))
    width = 0.8 / len(_METRIC_ORDER)
    for j, (metric, label) in enumerate(zip(_METRIC_ORDER, _METRIC_LABELS)):
        xs = [i + (j - 2) * width for i in range(len(rows))]
        ys = [m[metric] for _, m in rows]
        ax.bar(xs, ys, width=width, label=label)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([name for name, _ in rows], rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.set_title("Knowledge-boundary metrics")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def ra_accuracy_figure(
    columns: Sequence[str],
    rows: Sequence[tuple[str, Sequence[float | None]]],
    path: str | Path,
) -> Path:
    """Grouped bars of accuracy per retriever row and strategy column."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(rows)), 4.0))
    n_cols = max(len(columns), 1)
    width = 0.8 / n_cols
    for j, column in enumerate(columns):
        xs, ys = [], []
        for i, (_, values) in enumerate(rows):
            if values[j] is not None:
                xs.append(i + (j - (n_cols - 1) / 2) * width)
                ys.append(values[j])
        ax.bar(xs, ys, width=width, label=column)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([name for name, _ in rows])
    ax.set_ylim(0, 1)
    ax.set_ylabel("accuracy")
    ax.set_title("Accuracy by retriever and gating strategy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def reliance_figure(
    utilization: Mapping[int, float],
    corruption: Mapping[int, float],
    path: str | Path,
) -> Path:
    """Utilization and corruption rate per confidence level, side by side."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.5), sharey=True)
    for ax, data, title in (
        (axes[0], utilization, "Utilization ratio (gold documents)"),
        (axes[1], corruption, "Corruption rate (corrupt documents)"),
    ):
        levels = sorted(data)
        ax.bar([str(lv) for lv in levels], [data[lv] for lv in levels])
        ax.set_xlabel("confidence level")
        ax.set_ylim(0, 1)
        ax.set_title(title, fontsize=10)
    axes[0].set_ylabel("rate")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
