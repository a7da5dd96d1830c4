"""Bar charts of success tables, written next to the CSV output of ``eval``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import SuccessTable  # noqa: E402


def plot_success_table(table: SuccessTable, path: str | Path) -> Path:
    """One panel per stage; bars grouped by condition, one bar per method."""
    path = Path(path)
    n_stages = len(table.stage_labels)
    n_methods = len(table.methods)
    x = np.arange(len(table.conditions))
    width = 0.8 / max(n_methods, 1)
    fig, axes = plt.subplots(1, n_stages, figsize=(4.5 * n_stages, 3.6), sharey=True, squeeze=False)
    for k, (ax, label) in enumerate(zip(axes[0], table.stage_labels)):
        for i, method in enumerate(table.methods):
            heights = [table.cells.get((method, c), (np.nan,) * n_stages)[k] for c in table.conditions]
            ax.bar(x + (i - (n_methods - 1) / 2) * width, heights, width, label=method)
        ax.set_title(label)
        ax.set_xticks(x, table.conditions, fontsize=8)
        ax.set_ylim(0, 105)
        ax.grid(axis="y", alpha=0.3)
    axes[0][0].set_ylabel("success rate (%)")
    axes[0][-1].legend(fontsize=7, loc="upper right")
    fig.suptitle(table.title, fontsize=10)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the PNG bytes stable across runs
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
