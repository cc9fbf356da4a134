"""Report figures, rendered to files next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import ResultTable


def accuracy_by_subset(table: ResultTable, path: Path) -> Path:
    """Grouped bar chart of best mean accuracy per feature subset."""
    subsets = []
    for e in table.entries:
        if e.subset not in subsets:
            subsets.append(e.subset)
    classifiers = []
    for e in table.entries:
        if e.classifier not in classifiers:
            classifiers.append(e.classifier)

    fig, ax = plt.subplots(figsize=(8, 4.5))
    width = 0.8 / max(1, len(classifiers))
    x = np.arange(len(subsets))
    for i, clf in enumerate(classifiers):
        values = []
        for subset in subsets:
            try:
                values.append(table.entry(subset, clf).best_mean_accuracy)
            except KeyError:
                values.append(np.nan)
        ax.bar(x + (i - (len(classifiers) - 1) / 2) * width, values, width, label=clf)
    ax.axhline(50.0, color="0.5", linestyle="--", linewidth=1, label="chance")
    ax.set_xticks(x)
    ax.set_xticklabels(subsets)
    ax.set_ylabel("mean test accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_xlabel("feature subset")
    ax.set_title("Left/right fist classification by feature subset")
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def repetition_spread(table: ResultTable, path: Path) -> Path:
    """Per-repetition accuracies of each best grid point."""
    labels = [f"{e.subset}\n{e.classifier}" for e in table.entries]
    data = [e.per_repetition for e in table.entries]
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(labels)), 4.5))
    ax.boxplot(data, tick_labels=labels)
    ax.axhline(50.0, color="0.5", linestyle="--", linewidth=1)
    ax.set_ylabel("test accuracy (%)")
    ax.set_ylim(0, 100)
    ax.set_title("Accuracy spread over split repetitions (best grid point)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(table: ResultTable, fig_dir: Path) -> list[Path]:
    fig_dir.mkdir(parents=True, exist_ok=True)
    return [
        accuracy_by_subset(table, fig_dir / "accuracy_by_subset.png"),
        repetition_spread(table, fig_dir / "repetition_spread.png"),
    ]


def frequency_response(freqs: np.ndarray, mags_db: np.ndarray, title: str,
                       path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(freqs, mags_db)
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("magnitude (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.set_ylim(max(-120, float(np.min(mags_db)) - 5), 5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
