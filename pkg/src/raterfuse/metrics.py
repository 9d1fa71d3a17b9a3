"""Agreement metrics: Dice overlap, windowed SSIM, cross-entropy.

SSIM uses a uniform (box) window with replicate borders and population
statistics; the per-window index is averaged over every pixel position and
then over class channels. Constants follow the conventional (0.01 L)^2 and
(0.03 L)^2 with dynamic range L = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidClassError, ShapeMismatchError
from .grids import ClassGrid, ProbMap, require_same_grid

if TYPE_CHECKING:
    from .calibrate import RecurrenceTrace

CE_EPS = 1e-6


def _default_class_sets() -> "dict[str, frozenset[int]]":
    return {"disc": frozenset({1, 2}), "cup": frozenset({2})}


@dataclass(frozen=True)
class DiceSpec:
    """Named class sets to score. Default: disc = {1, 2}, cup = {2}."""

    class_sets: Mapping[str, frozenset[int]] = field(default_factory=_default_class_sets)

    def __post_init__(self) -> None:
        if not self.class_sets:
            raise ValueError("need at least one class set")
        for name, s in self.class_sets.items():
            if not s:
                raise ValueError(f"class set {name!r} is empty")
            if any(c < 0 for c in s):
                raise InvalidClassError(f"class set {name!r} holds a negative index")

    @staticmethod
    def default_for(classes: int) -> "DiceSpec":
        """Disc/cup sets for 3-class data, one set per foreground class otherwise."""
        if classes == 3:
            return DiceSpec()
        return DiceSpec({f"class{c}": frozenset({c}) for c in range(1, classes)})


@dataclass(frozen=True)
class SsimSpec:
    """Window size (odd) and stability constants."""

    window: int = 7
    c1: float = (0.01 * 1.0) ** 2
    c2: float = (0.03 * 1.0) ** 2

    def __post_init__(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be a positive odd integer, got {self.window}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("stability constants must be positive")


def dice(pred: ClassGrid, ref: ClassGrid, spec: DiceSpec | None = None) -> "dict[str, float]":
    """Dice overlap per named class set; two empty regions score 1.0."""
    require_same_grid(pred.shape, ref.shape)
    if spec is None:
        spec = DiceSpec.default_for(pred.shape.classes)
    k = pred.shape.classes
    out: dict[str, float] = {}
    for name, classes in spec.class_sets.items():
        if any(c >= k for c in classes):
            raise InvalidClassError(f"class set {name!r} exceeds K = {k}")
        a = np.isin(pred.cells, list(classes))
        b = np.isin(ref.cells, list(classes))
        total = int(a.sum()) + int(b.sum())
        if total == 0:
            out[name] = 1.0
        else:
            out[name] = 2.0 * int((a & b).sum()) / total
    return out


def _window_means(channel: np.ndarray, window: int) -> np.ndarray:
    pad = window // 2
    padded = np.pad(channel, pad, mode="edge")
    windows = sliding_window_view(padded, (window, window))
    return windows.mean(axis=(-2, -1))


def ssim(a: ProbMap, b: ProbMap, spec: SsimSpec | None = None) -> float:
    """Mean SSIM between two probability maps.

    Scored per class channel over every window position (replicate
    padding keeps one window per pixel), then averaged over channels.
    """
    if spec is None:
        spec = SsimSpec()
    require_same_grid(a.shape, b.shape)
    h, w = a.shape.height, a.shape.width
    if spec.window > min(h, w):
        raise ShapeMismatchError(f"window {spec.window} exceeds grid {h}x{w}")
    channel_scores = []
    for k in range(a.shape.classes):
        x = a.values[..., k]
        y = b.values[..., k]
        mu_x = _window_means(x, spec.window)
        mu_y = _window_means(y, spec.window)
        var_x = _window_means(x * x, spec.window) - mu_x * mu_x
        var_y = _window_means(y * y, spec.window) - mu_y * mu_y
        cov = _window_means(x * y, spec.window) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + spec.c1) * (2.0 * cov + spec.c2)
        den = (mu_x * mu_x + mu_y * mu_y + spec.c1) * (var_x + var_y + spec.c2)
        channel_scores.append((num / den).mean())
    return float(np.mean(channel_scores))


def cross_entropy(pred: ProbMap, target: ClassGrid, eps: float = CE_EPS) -> float:
    """Mean over pixels of -log(pred probability of the target class).

    Predictions are floored at ``eps`` before the log.
    """
    require_same_grid(pred.shape, target.shape)
    i, j = np.indices(target.cells.shape)
    picked = pred.values[i, j, target.cells]
    return float(np.mean(-np.log(np.maximum(picked, eps))))


def total_agreement(trace: "RecurrenceTrace") -> float:
    """Aggregate disagreement of a recurrence run.

    Sums, over iterations, every rater's cross-entropy between its
    predicted and observed labels plus (1 - SSIM) between consecutive
    fused maps; the first iteration has no predecessor and contributes no
    SSIM term. Lower is better; the value is >= 0.
    """
    total = 0.0
    for step in trace.steps:
        total += float(sum(step.rater_ce))
        if step.ssim_prev is not None:
            total += 1.0 - step.ssim_prev
    return total
