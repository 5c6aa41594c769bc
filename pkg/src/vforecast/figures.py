"""Matplotlib rendering of report figures.

Every report-producing CLI path writes a figure next to its delimited
output: the complexity command plots the entropy histogram, the report
command plots per-column IoU curves, and the predict command dumps an
input / truth / forecast panel.  All figures go straight to files; no
interactive backend is ever required.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .raster import SeriesImage

_DPI = 150


def save_wpe_histogram(values_by_label: dict[str, np.ndarray], bin_edges: np.ndarray, path) -> None:
    """Histogram of weighted permutation entropy, one overlay per dataset."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in values_by_label.items():
        ax.hist(values, bins=bin_edges, alpha=0.55, label=label, edgecolor="none")
    ax.set_xlabel("weighted permutation entropy")
    ax.set_ylabel("series count")
    ax.set_xlim(0.0, 1.0)
    if len(values_by_label) > 1:
        ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_iou_profiles(curves: dict[str, tuple[np.ndarray, np.ndarray]], path, title: str = "") -> None:
    """Mean IoU versus prediction-region column index, one line per method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in curves.items():
        ax.plot(x, y, marker="o", markersize=3, label=label)
    ax.set_xlabel("prediction-region column")
    ax.set_ylabel("mean IoU")
    ax.set_ylim(0.0, 1.0)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_prediction_panel(
    input_img: SeriesImage,
    target_img: SeriesImage,
    pred_img: SeriesImage,
    path,
    method: str = "forecast",
) -> None:
    """Side-by-side input, ground truth, and forecast images."""
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    for ax, img, label in zip(axes, (input_img, target_img, pred_img), ("input", "truth", method)):
        shown = img.pixels / np.maximum(img.pixels.max(axis=0, keepdims=True), 1e-12)
        ax.imshow(shown, cmap="gray", aspect="auto", interpolation="nearest")
        ax.set_title(label)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_training_curves(history_rows: list[dict], path) -> None:
    """Train and validation loss per epoch from a history table."""
    epochs = [r["epoch"] for r in history_rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [r["train_loss"] for r in history_rows], label="train")
    ax.plot(epochs, [r["val_loss"] for r in history_rows], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
