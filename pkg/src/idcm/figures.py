"""Matplotlib renderings of the report outputs.

Every reporting subcommand can drop a figure next to its delimited output;
these helpers render to files only (Agg backend, no display).
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_latency_cdf(
    values_by_label: Mapping[str, Sequence[float]], grid: Sequence[float], path: str
) -> None:
    """Fraction of queries answered within each time bound, one line per setup."""
    from idcm.bench import latency_cdf

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in values_by_label.items():
        ax.plot(grid, latency_cdf(values, grid), label=label, drawstyle="steps-post")
    ax.set_xlabel("time bound (ms)")
    ax.set_ylabel("fraction of queries answered")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    _finish(fig, path)


def save_latency_boxplot(values_by_label: Mapping[str, Sequence[float]], path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = list(values_by_label)
    ax.boxplot([values_by_label[label] for label in labels], tick_labels=labels, showfliers=True)
    ax.set_ylabel("per-query latency (ms)")
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)


def save_position_histogram(hist: Mapping[str, np.ndarray], path: str) -> None:
    """Available vs selected vs expensive-stage-top windows by position."""
    fig, ax = plt.subplots(figsize=(8, 4))
    positions = np.arange(len(hist["available"]))
    ax.bar(positions, hist["available"], color="0.85", label="available")
    ax.bar(positions, hist["selected"], color="tab:blue", alpha=0.8, label="selected")
    ax.bar(positions, hist["teacher_top"], color="tab:orange", alpha=0.9, label="top-l scored")
    ax.set_xlabel("window position in document")
    ax.set_ylabel("count")
    ax.legend()
    _finish(fig, path)


def save_recall_bars(recall_per_grade: Mapping[int, float], path: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    grades = sorted(recall_per_grade)
    ax.bar([str(g) for g in grades], [recall_per_grade[g] for g in grades], color="tab:blue")
    ax.set_xlabel("document relevance grade")
    ax.set_ylabel("mean selection recall")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)


def save_metric_histogram(per_query: Mapping[str, float], metric_name: str, path: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(list(per_query.values()), bins=20, range=(0.0, 1.0), color="tab:blue")
    ax.set_xlabel(metric_name)
    ax.set_ylabel("queries")
    ax.grid(alpha=0.3, axis="y")
    _finish(fig, path)
