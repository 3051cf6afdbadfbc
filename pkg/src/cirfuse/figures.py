"""Matplotlib renderings written next to the delimited outputs.

Figures are a convenience for humans; machine consumers read the JSON/CSV.
The Agg backend keeps rendering headless.
"""
from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

if TYPE_CHECKING:
    from cirfuse.evaluation import EvalReport
    from cirfuse.experiments import HeatmapTable


def recall_bars(report: "EvalReport", path: str | Path) -> Path:
    """Grouped recall bars per K, one series per category (or overall)."""
    series = (
        list(report.categories) + ["Average"] if report.categories else ["overall"]
    )
    ks = report.ks
    x = np.arange(len(ks), dtype=float)
    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(1.8 + 1.2 * len(ks), 3.6))
    for s, name in enumerate(series):
        prefix = "" if name == "overall" else f"{name}/"
        values = [report.per_metric[f"{prefix}R@{k}"] for k in ks]
        offset = (s - (len(series) - 1) / 2) * width
        ax.bar(x + offset, values, width=width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels([f"R@{k}" for k in ks])
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("recall")
    ax.set_title(
        f"{report.dataset}/{report.split}  alpha={report.params.alpha} "
        f"beta={report.params.beta}"
    )
    ax.legend(fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def heatmap_png(table: "HeatmapTable", path: str | Path) -> Path:
    """Beta rows (low at bottom) by alpha columns, brighter is better."""
    values = np.asarray(table.values, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 5.2))
    image = ax.imshow(values, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")

    def thin(ticks: Sequence[float]) -> tuple[list[int], list[str]]:
        step = max(1, (len(ticks) + 10) // 11)
        idx = list(range(0, len(ticks), step))
        return idx, [f"{ticks[i]:g}" for i in idx]

    xi, xl = thin(table.alphas)
    yi, yl = thin(table.betas)
    ax.set_xticks(xi)
    ax.set_xticklabels(xl)
    ax.set_yticks(yi)
    ax.set_yticklabels(yl)
    fig.colorbar(image, ax=ax, label=table.metric)
    ax.set_title(table.metric)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def ablation_bars(
    results: Sequence[tuple[tuple[int, ...], "EvalReport"]],
    metric: str,
    path: str | Path,
) -> Path:
    """One bar per caption subset for the chosen metric."""
    labels = ["+".join(str(p) for p in subset) for subset, _ in results]
    values = [report.per_metric[metric] for _, report in results]
    fig, ax = plt.subplots(figsize=(1.6 + 0.7 * len(labels), 3.6))
    ax.bar(np.arange(len(labels)), values)
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels)
    ax.set_xlabel("caption subset")
    ax.set_ylabel(metric)
    ax.set_ylim(0.0, 1.0)
    ax.set_title(f"caption ablation: {metric}")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
