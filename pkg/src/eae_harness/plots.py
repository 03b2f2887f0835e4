"""Matplotlib figure rendering for the report paths.

Every figure is written straight to a file; nothing is shown interactively.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_matrix_heatmap(matrix, path: str | Path, title: str = "Argument F1") -> None:
    """Source x target transfer heatmap with cell annotations."""
    rows = list(matrix.rows)
    cols = list(matrix.columns)
    grid = [
        [
            (matrix.cells.get((rk, c)).mean_f1 if matrix.cells.get((rk, c)) else None)
            for c in cols
        ]
        for rk in rows
    ]
    data = [[v if v is not None else float("nan") for v in row] for row in grid]
    fig, ax = plt.subplots(figsize=(1.2 * len(cols) + 3, 0.6 * len(rows) + 2))
    im = ax.imshow(data, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(cols)), cols, rotation=45, ha="right")
    ax.set_yticks(range(len(rows)), [rk.label() for rk in rows])
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            ax.text(j, i, "--" if v is None else f"{v:.2f}", ha="center", va="center", fontsize=8)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_per_type_bars(per_type: Mapping[str, float], path: str | Path, title: str = "Per-event-type F1") -> None:
    items = sorted(per_type.items(), key=lambda kv: kv[1], reverse=True)
    names = [k for k, _ in items]
    vals = [v for _, v in items]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(names) + 2), 4))
    ax.bar(range(len(names)), vals, color="#4878cf")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_curve(sweep: Sequence[tuple[float, float]], t_dev: float, path: str | Path) -> None:
    """Threshold-calibration sweep: dev F1 against each percentile threshold."""
    xs = [t for t, _ in sweep]
    ys = [f for _, f in sweep]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(xs, ys, marker="o", color="#4878cf")
    ax.axvline(t_dev, color="#d65f5f", linestyle="--", label=f"t_dev = {t_dev:.4f}")
    ax.set_xlabel("confidence threshold")
    ax.set_ylabel("dev argument F1")
    ax.set_title("Threshold calibration sweep")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_transfer_scatter(
    in_domain: Mapping[str, float],
    zero_shot: Mapping[str, float],
    rho: float,
    path: str | Path,
) -> None:
    """In-domain vs zero-shot per-type F1 scatter with the Pearson rho."""
    common = sorted(set(in_domain) & set(zero_shot))
    xs = [in_domain[t] for t in common]
    ys = [zero_shot[t] for t in common]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(xs, ys, color="#4878cf")
    for t, x, y in zip(common, xs, ys):
        ax.annotate(t, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("in-domain F1")
    ax.set_ylabel("zero-shot F1")
    ax.set_xlim(-0.05, 1.05)
    ax.set_ylim(-0.05, 1.05)
    ax.set_title(f"Per-type transfer correlation (rho = {rho:.3f}, n = {len(common)})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
