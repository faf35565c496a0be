"""Matplotlib renderings written next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_matrix_heatmap(
    matrix: np.ndarray,
    path: Path | str,
    title: str | None = None,
    symmetric: bool = False,
) -> None:
    """Heatmap of a connectivity or difference matrix.

    ``symmetric`` centers a diverging colormap at zero, for signed
    difference matrices.
    """
    fig, ax = plt.subplots(figsize=(4.5, 4.0))
    if symmetric:
        bound = float(np.max(np.abs(matrix))) or 1.0
        im = ax.imshow(matrix, cmap="RdBu_r", vmin=-bound, vmax=bound)
    else:
        im = ax.imshow(matrix, cmap="viridis")
    ax.set_xlabel("ROI")
    ax.set_ylabel("ROI")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curves(curves: list[dict], path: Path | str) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    epochs = [row["epoch"] for row in curves]
    for key, label in (
        ("l_adv_sc", "adversarial (structural)"),
        ("l_adv_fc", "adversarial (functional)"),
        ("l_cls", "classification"),
        ("l1_sc", "L1 structural"),
        ("l1_fc", "L1 functional"),
    ):
        ax.plot(epochs, [row[key] for row in curves], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_importance_bars(scores: np.ndarray, path: Path | str, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.bar(np.arange(len(scores)), scores)
    ax.set_xlabel("ROI index")
    ax.set_ylabel("importance (accuracy drop)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
