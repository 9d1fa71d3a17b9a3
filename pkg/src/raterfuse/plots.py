"""Figure rendering for report output.

All figures are written to files; no interactive backend is required.
"""

from __future__ import annotations

import os
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import ClassGrid, argmax_grid
from .metrics import DiceSpec, dice

if TYPE_CHECKING:
    from .calibrate import HQState, RecurrenceTrace


def save_trace_figures(
    trace: "RecurrenceTrace",
    out_dir: "str | os.PathLike[str]",
    ref: ClassGrid | None = None,
    dice_spec: DiceSpec | None = None,
) -> "list[str]":
    """Render per-iteration metrics, final confusions, and the fused mask.

    Returns the written file paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    iters = np.arange(1, trace.iterations + 1)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ce = np.array([step.rater_ce for step in trace.steps])
    for m in range(ce.shape[1]):
        ax.plot(iters, ce[:, m], marker="o", label=f"rater {m + 1} CE")
    ssim_vals = [step.ssim_prev for step in trace.steps]
    if any(v is not None for v in ssim_vals):
        xs = [i for i, v in zip(iters, ssim_vals) if v is not None]
        ys = [v for v in ssim_vals if v is not None]
        ax.plot(xs, ys, marker="s", linestyle="--", label="SSIM to previous")
    if ref is not None:
        spec = dice_spec or DiceSpec.default_for(ref.shape.classes)
        means = [
            float(np.mean(list(dice(argmax_grid(step.fused), ref, spec).values())))
            for step in trace.steps
        ]
        ax.plot(iters, means, marker="^", linestyle=":", label="mean Dice vs reference")
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    ax.set_xticks(iters)
    ax.legend(loc="best", fontsize="small")
    ax.set_title("Recurrence metrics")
    fig.tight_layout()
    path = os.path.join(out_dir, "metrics_per_iteration.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    est = trace.final_confusion
    m = est.raters
    fig, axes = plt.subplots(1, m, figsize=(3.2 * m, 3.2), squeeze=False)
    for idx in range(m):
        ax = axes[0][idx]
        im = ax.imshow(est.confusions[idx], vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_title(f"rater {idx + 1}")
        ax.set_xlabel("labeled class")
        if idx == 0:
            ax.set_ylabel("assumed true class")
        for r in range(est.classes):
            for c in range(est.classes):
                ax.text(c, r, f"{est.confusions[idx, r, c]:.2f}",
                        ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, ax=[axes[0][i] for i in range(m)], shrink=0.85)
    path = os.path.join(out_dir, "confusion_matrices.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fused_cells = argmax_grid(trace.final_fused).cells
    panels = 2 if ref is not None else 1
    fig, axes = plt.subplots(1, panels, figsize=(4.2 * panels, 4.2), squeeze=False)
    k = trace.final_fused.shape.classes
    axes[0][0].imshow(fused_cells, vmin=0, vmax=k - 1, cmap="magma", interpolation="nearest")
    axes[0][0].set_title("fused argmax")
    if ref is not None:
        axes[0][1].imshow(ref.cells, vmin=0, vmax=k - 1, cmap="magma", interpolation="nearest")
        axes[0][1].set_title("reference")
    for ax in axes[0]:
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    path = os.path.join(out_dir, "fused_mask.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def save_hq_figure(state: "HQState", path: "str | os.PathLike[str]") -> str:
    """Objective value per outer iteration on a log-scale y axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(1, state.iterations + 1), state.objectives, marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("objective")
    ax.set_title("Half-quadratic objective")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
