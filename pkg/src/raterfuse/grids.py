"""Dense grid types for multi-rater segmentation data.

All values live on an H x W pixel grid with K classes and, for rater-indexed
data, M raters. Arrays are row-major (pixel rows, then columns, then the
class axis last) and use int64 for labels and float64 for probabilities.
Instances are immutable: wrapped arrays are marked read-only at construction
so they can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidClassError, ShapeMismatchError

# Per-pixel probability rows must sum to 1 within this gate.
PROB_SUM_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GridShape:
    """Grid dimensions: height, width, class count, rater count."""

    height: int
    width: int
    classes: int
    raters: int = 1

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ShapeMismatchError(f"grid must be at least 1x1, got {self.height}x{self.width}")
        if self.classes < 2:
            raise ShapeMismatchError(f"need at least 2 classes, got {self.classes}")
        if self.raters < 1:
            raise ShapeMismatchError(f"need at least 1 rater, got {self.raters}")

    @property
    def pixels(self) -> int:
        return self.height * self.width

    def same_grid(self, other: "GridShape") -> bool:
        """True when height, width, and classes agree (raters may differ)."""
        return (
            self.height == other.height
            and self.width == other.width
            and self.classes == other.classes
        )


def require_same_grid(*shapes: GridShape) -> None:
    first = shapes[0]
    for s in shapes[1:]:
        if not first.same_grid(s):
            raise ShapeMismatchError(f"grid mismatch: {first} vs {s}")


@dataclass(frozen=True, eq=False)
class ClassGrid:
    """Hard per-pixel class assignment. ``cells`` is (H, W) int64 in [0, K)."""

    shape: GridShape
    cells: np.ndarray

    def __post_init__(self) -> None:
        cells = np.asarray(self.cells, dtype=np.int64)
        if cells.shape != (self.shape.height, self.shape.width):
            raise ShapeMismatchError(
                f"cells shape {cells.shape} does not match {self.shape}"
            )
        if cells.size and (cells.min() < 0 or cells.max() >= self.shape.classes):
            raise InvalidClassError(
                f"cell values must lie in [0, {self.shape.classes})"
            )
        object.__setattr__(self, "cells", _frozen(cells))

    @classmethod
    def from_array(cls, cells: np.ndarray, classes: int) -> "ClassGrid":
        cells = np.asarray(cells, dtype=np.int64)
        h, w = cells.shape
        return cls(GridShape(h, w, classes), cells)

    def class_counts(self) -> np.ndarray:
        """Pixel count per class, shape (K,)."""
        return np.bincount(self.cells.ravel(), minlength=self.shape.classes)


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel class distribution. ``values`` is (H, W, K) float64.

    Every entry lies in [0, 1] and every pixel row sums to 1 within
    ``PROB_SUM_TOL``.
    """

    shape: GridShape
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        expected = (self.shape.height, self.shape.width, self.shape.classes)
        if v.shape != expected:
            raise ShapeMismatchError(f"values shape {v.shape}, expected {expected}")
        if not np.isfinite(v).all():
            raise ValueError("probabilities must be finite")
        if v.min(initial=0.0) < 0.0 or v.max(initial=0.0) > 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        sums = v.sum(axis=-1)
        err = np.abs(sums - 1.0).max()
        if err > PROB_SUM_TOL:
            raise ValueError(f"pixel rows must sum to 1 within {PROB_SUM_TOL}, max error {err:g}")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ProbMap":
        values = np.asarray(values, dtype=np.float64)
        h, w, k = values.shape
        return cls(GridShape(h, w, k), values)


@dataclass(frozen=True, eq=False)
class LabelStack:
    """Labels from M raters on one grid. ``labels`` is (M, H, W) int64."""

    shape: GridShape
    labels: np.ndarray

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels, dtype=np.int64)
        expected = (self.shape.raters, self.shape.height, self.shape.width)
        if lab.shape != expected:
            raise ShapeMismatchError(f"labels shape {lab.shape}, expected {expected}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.shape.classes):
            raise InvalidClassError(f"labels must lie in [0, {self.shape.classes})")
        object.__setattr__(self, "labels", _frozen(lab))

    @classmethod
    def from_grids(cls, grids: "list[ClassGrid]") -> "LabelStack":
        if not grids:
            raise ShapeMismatchError("need at least one rater grid")
        require_same_grid(*[g.shape for g in grids])
        base = grids[0].shape
        shape = GridShape(base.height, base.width, base.classes, len(grids))
        return cls(shape, np.stack([g.cells for g in grids]))

    def rater(self, m: int) -> ClassGrid:
        s = self.shape
        return ClassGrid(GridShape(s.height, s.width, s.classes), self.labels[m])

    def one_hot_view(self) -> np.ndarray:
        """One-hot encoding of all raters, shape (M, H, W, K) float64."""
        s = self.shape
        out = np.zeros((s.raters, s.height, s.width, s.classes))
        m, i, j = np.indices(self.labels.shape)
        out[m, i, j, self.labels] = 1.0
        return out


@dataclass(frozen=True, eq=False)
class PriorMap:
    """Per-pixel prior in logit form. ``logits`` is (H, W, K) float64, finite."""

    shape: GridShape
    logits: np.ndarray

    def __post_init__(self) -> None:
        lg = np.asarray(self.logits, dtype=np.float64)
        expected = (self.shape.height, self.shape.width, self.shape.classes)
        if lg.shape != expected:
            raise ShapeMismatchError(f"logits shape {lg.shape}, expected {expected}")
        if not np.isfinite(lg).all():
            raise ValueError("prior logits must be finite")
        object.__setattr__(self, "logits", _frozen(lg))

    @classmethod
    def from_class_probs(cls, shape: GridShape, probs: np.ndarray) -> "PriorMap":
        """Broadcast a K-vector of strictly positive class probabilities."""
        p = np.asarray(probs, dtype=np.float64)
        if p.shape != (shape.classes,):
            raise ShapeMismatchError(f"need a ({shape.classes},) vector, got {p.shape}")
        if (p <= 0).any():
            raise ValueError("class probabilities must be strictly positive")
        logits = np.broadcast_to(np.log(p), (shape.height, shape.width, shape.classes))
        return cls(GridShape(shape.height, shape.width, shape.classes), logits.copy())


def one_hot(grid: ClassGrid, classes: int | None = None) -> ProbMap:
    """Encode a ClassGrid as a 0/1 ProbMap with ``classes`` channels."""
    k = grid.shape.classes if classes is None else classes
    if grid.cells.size and grid.cells.max() >= k:
        raise InvalidClassError(f"grid holds class {grid.cells.max()}, needs K > that")
    if k < 2:
        raise InvalidClassError("one_hot needs at least 2 classes")
    h, w = grid.shape.height, grid.shape.width
    out = np.zeros((h, w, k))
    i, j = np.indices(grid.cells.shape)
    out[i, j, grid.cells] = 1.0
    return ProbMap(GridShape(h, w, k), out)


def argmax_grid(pmap: ProbMap) -> ClassGrid:
    """Most probable class per pixel; ties go to the lowest class index."""
    s = pmap.shape
    cells = np.argmax(pmap.values, axis=-1)
    return ClassGrid(GridShape(s.height, s.width, s.classes), cells)


def uniform_prior(shape: GridShape) -> PriorMap:
    """All-zero logits: no class preferred anywhere."""
    return PriorMap(
        GridShape(shape.height, shape.width, shape.classes),
        np.zeros((shape.height, shape.width, shape.classes)),
    )
