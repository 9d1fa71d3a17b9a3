"""Global per-rater confusion estimation from a soft consensus.

Each rater's reliability is summarized by one K x K row-stochastic matrix:
row k gives the distribution of the rater's label when the consensus puts
its mass on class k. Estimation is a smoothed soft count; prediction maps a
consensus distribution through the matrix to reconstruct what the rater is
expected to say.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .fusion import ExpertnessMaps, _log_likelihood_maps
from .grids import GridShape, LabelStack, ProbMap, require_same_grid

DEFAULT_SMOOTHING = 1e-6


@dataclass(frozen=True, eq=False)
class ConfusionEstimate:
    """Estimated confusion matrices with their smoothing and support.

    ``confusions`` is (M, K, K) row-stochastic; with smoothing eps > 0 every
    entry is at least eps / (1 + K*eps). ``support`` is (M, K): the total
    consensus mass behind each assumed-true class at estimation time.
    """

    confusions: np.ndarray
    smoothing: float
    support: np.ndarray

    def __post_init__(self) -> None:
        theta = np.asarray(self.confusions, dtype=np.float64)
        if theta.ndim != 3 or theta.shape[1] != theta.shape[2]:
            raise ShapeMismatchError(f"confusions must be (M, K, K), got {theta.shape}")
        m, k, _ = theta.shape
        sup = np.asarray(self.support, dtype=np.float64)
        if sup.shape != (m, k):
            raise ShapeMismatchError(f"support must be {(m, k)}, got {sup.shape}")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        err = np.abs(theta.sum(axis=-1) - 1.0).max()
        if err > 1e-12:
            raise ValueError(f"confusion rows must sum to 1, max error {err:g}")
        floor = self.smoothing / (1.0 + k * self.smoothing)
        if theta.min() < floor * (1.0 - 1e-12):
            raise ValueError(f"entries must be >= {floor:g} with smoothing {self.smoothing:g}")
        theta = np.ascontiguousarray(theta)
        theta.setflags(write=False)
        sup = np.ascontiguousarray(sup)
        sup.setflags(write=False)
        object.__setattr__(self, "confusions", theta)
        object.__setattr__(self, "support", sup)

    @property
    def raters(self) -> int:
        return self.confusions.shape[0]

    @property
    def classes(self) -> int:
        return self.confusions.shape[1]


def soft_confusion(labels: np.ndarray, weights: np.ndarray, eps: float) -> np.ndarray:
    """Smoothed soft-count confusion of one rater against a soft reference.

    ``labels`` is (H, W) int, ``weights`` (H, W, K) soft reference mass.
    Counts S[k, c] = sum over pixels of weights[..., k] where the rater said
    c are row-normalized to fractions p (a class with zero support gets the
    uniform row), then smoothed: theta[k, c] = (eps + p[k, c]) / (1 + K*eps).
    Smoothing therefore does not depend on how much mass backs a class, and
    theta is exactly the count fractions when eps = 0.
    """
    k = weights.shape[-1]
    counts = np.empty((k, k))
    for c in range(k):
        counts[:, c] = weights[labels == c].sum(axis=0)
    support = counts.sum(axis=1)
    fractions = np.where(
        support[:, None] > 0.0,
        counts / np.where(support[:, None] > 0.0, support[:, None], 1.0),
        1.0 / k,
    )
    return (eps + fractions) / (1.0 + k * eps)


def estimate_confusion(
    stack: LabelStack, fused: ProbMap, eps: float = DEFAULT_SMOOTHING
) -> ConfusionEstimate:
    """Fit one confusion matrix per rater against a fused consensus map.

    Parameters
    ----------
    stack : LabelStack
        Observed rater labels.
    fused : ProbMap
        Soft consensus assigning each pixel a class distribution.
    eps : float
        Smoothing weight, >= 0. With eps = 0 the estimate is the bare
        count fraction and may contain zeros.
    """
    require_same_grid(stack.shape, fused.shape)
    if eps < 0:
        raise ValueError("eps must be >= 0")
    s = stack.shape
    mass = fused.values.reshape(-1, s.classes).sum(axis=0)
    confusions = np.stack(
        [soft_confusion(stack.labels[m], fused.values, eps) for m in range(s.raters)]
    )
    support = np.tile(mass, (s.raters, 1))
    return ConfusionEstimate(confusions, eps, support)


def predict_rater_labels(fused: ProbMap, confusion: ConfusionEstimate) -> "list[ProbMap]":
    """Expected rater label distributions: fused mass pushed through theta.

    Returns one ProbMap per rater with values[i, j, c] = sum over k of
    fused[i, j, k] * theta[k, c]. Row-stochastic theta preserves
    normalization.
    """
    s = fused.shape
    if confusion.classes != s.classes:
        raise ShapeMismatchError(
            f"estimate has {confusion.classes} classes, map has {s.classes}"
        )
    out = []
    for m in range(confusion.raters):
        vals = np.einsum("ijk,kc->ijc", fused.values, confusion.confusions[m])
        out.append(ProbMap(GridShape(s.height, s.width, s.classes), vals))
    return out


def expertness_from_estimate(stack: LabelStack, confusion: ConfusionEstimate) -> ExpertnessMaps:
    """Materialize expertness maps from estimated confusions.

    Same contract as ``fusion.expertness_from_model``: entries must be
    strictly positive, which any estimate with smoothing > 0 guarantees.
    """
    s = stack.shape
    if confusion.raters != s.raters or confusion.classes != s.classes:
        raise ShapeMismatchError(
            f"estimate is {confusion.raters} x {confusion.classes}, stack {s.raters} x {s.classes}"
        )
    return ExpertnessMaps(s, _log_likelihood_maps(stack.labels, confusion.confusions))
