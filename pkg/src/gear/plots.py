"""Matplotlib figures rendered next to the delimited report outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def plot_coverage_curve(ks: Sequence[int], means: Sequence[float], path) -> None:
    """Charge coverage of the top-k retrieved documents as a function of k."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(ks, means, marker="o", color="#1f77b4")
    ax.set_xlabel("k (retrieved documents)")
    ax.set_ylabel("mean coverage")
    ax.set_title("Charge coverage of top-k retrieved documents")
    ax.set_xticks(list(ks))
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)


def plot_loss_curves(rows: Sequence[Mapping[str, float]], path) -> None:
    """Per-epoch training losses (indexing, retrieval, revision, total)."""
    epochs = [row["epoch"] for row in rows]
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    for key, label, color in (
        ("indexing_loss", "indexing", "#1f77b4"),
        ("retrieval_loss", "retrieval", "#ff7f0e"),
        ("revision_loss", "revision", "#2ca02c"),
        ("total", "total", "#555555"),
    ):
        ax.plot(epochs, [row[key] for row in rows], label=label, color=color,
                linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title("Training losses")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150)
    plt.close(fig)
