"""PNG figures for the report directory (matplotlib, Agg backend).

Figures are a convenience for humans; they are not part of the golden file set.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no software/version stamp, so reruns give identical bytes where the backend allows
_META = {"Software": None}


def plot_accuracy_by_year(reports, names, path, title: str = "Holdout accuracy by year") -> None:
    """Grouped bars, one group per year, one bar per model."""
    years = sorted(set().union(*(r.per_year for r in reports)))
    x = np.arange(len(years))
    width = 0.8 / max(len(reports), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(years) + 2), 4.0))
    for k, (rep, name) in enumerate(zip(reports, names)):
        acc = [100.0 * rep.per_year.get(y, (np.nan, 0))[0] for y in years]
        ax.bar(x + (k - (len(reports) - 1) / 2) * width, acc, width,
               label=f"{name} ({100 * rep.accuracy:.1f}%)")
    ax.set_xticks(x, [str(y) for y in years], rotation=45)
    ax.set_ylim(0, 100)
    ax.axhline(50, color="grey", lw=0.8, ls="--")
    ax.set_ylabel("directional accuracy (%)")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_grid_top(results, path, k: int = 4) -> None:
    """Train / holdout accuracy of the top ``k`` grid rows of each family."""
    fig, axes = plt.subplots(1, len(results), figsize=(5.0 * len(results), 4.0), squeeze=False)
    for ax, res in zip(axes[0], results):
        rows = res.top(k)
        x = np.arange(len(rows))
        ax.bar(x - 0.2, [100 * r.train_accuracy for r in rows], 0.4, label="param train")
        ax.bar(x + 0.2, [100 * r.holdout_accuracy for r in rows], 0.4, label="param holdout")
        ax.set_xticks(x, [r.config.label().replace(" ", "\n", 2) for r in rows], fontsize=7)
        ax.set_ylim(0, 100)
        ax.set_title(f"{res.family}: top {len(rows)}")
        ax.legend(loc="lower right", fontsize=8)
    axes[0][0].set_ylabel("accuracy (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
