"""Reference fusers: per-pixel majority vote and EM over confusion matrices.

Both are implemented against the same public primitives as the calibration
recurrence but stand alone, so the two routes can be cross-checked against
each other in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expertness import ConfusionEstimate, estimate_confusion
from .fusion import RaterGenerativeModel, bayes_oracle
from .grids import ClassGrid, GridShape, LabelStack, ProbMap, argmax_grid


@dataclass(frozen=True)
class StapleConfig:
    """EM settings: iteration cap, parameter tolerance, smoothing, init."""

    max_iterations: int = 50
    tol: float = 1e-7
    smoothing: float = 1e-6
    init_diagonal: float = 0.9

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.init_diagonal < 1.0:
            raise ValueError("init_diagonal must lie in (0, 1)")


def vote_counts(stack: LabelStack) -> np.ndarray:
    """Integer per-pixel vote counts, shape (H, W, K)."""
    s = stack.shape
    counts = np.zeros((s.height, s.width, s.classes), dtype=np.int64)
    i, j = np.indices((s.height, s.width))
    for m in range(s.raters):
        np.add.at(counts, (i, j, stack.labels[m]), 1)
    return counts


def majority_vote(stack: LabelStack) -> "tuple[ProbMap, ClassGrid]":
    """Vote-fraction map and its argmax labeling (ties to the lowest index).

    Each fraction is rounded independently as count/M, so equal counts give
    bitwise-equal fractions and the map's argmax breaks ties exactly like the
    integer counts do. Row sums land within a couple of ulp of 1.0 (telescoped
    sums would be exact but put the rounding slack on the last class, which
    silently moves three-way ties to the highest index).
    """
    s = stack.shape
    counts = vote_counts(stack)
    fractions = counts / float(s.raters)
    pmap = ProbMap(GridShape(s.height, s.width, s.classes), fractions)
    cells = np.argmax(counts, axis=-1)
    grid = ClassGrid(GridShape(s.height, s.width, s.classes), cells)
    return pmap, grid


def empirical_class_prior(stack: LabelStack, eps: float = 1e-6) -> np.ndarray:
    """Class frequencies of the majority-vote labeling, floored away from 0.

    The frequencies are mixed with the uniform distribution,
    (1 - K*eps)*p + eps, so every class keeps strictly positive prior mass.
    """
    _, grid = majority_vote(stack)
    k = stack.shape.classes
    freq = grid.class_counts() / stack.shape.pixels
    return (1.0 - k * eps) * freq + eps


def symmetric_confusions(raters: int, classes: int, diagonal: float) -> np.ndarray:
    """Identical per-rater matrices: ``diagonal`` on-diagonal, rest uniform."""
    off = (1.0 - diagonal) / (classes - 1)
    theta = np.full((classes, classes), off)
    np.fill_diagonal(theta, diagonal)
    return np.tile(theta, (raters, 1, 1))


def observed_log_likelihood(stack: LabelStack, model: RaterGenerativeModel) -> float:
    """Sum over pixels of log sum_k prior[k] * prod_m theta[k, observed]."""
    s = stack.shape
    lik = np.broadcast_to(model.class_prior, (s.height, s.width, s.classes)).copy()
    for m in range(s.raters):
        lik *= np.moveaxis(model.confusions[m][:, stack.labels[m]], 0, -1)
    return float(np.log(lik.sum(axis=-1)).sum())


def staple(
    stack: LabelStack, config: StapleConfig | None = None
) -> "tuple[ProbMap, ConfusionEstimate]":
    """EM estimate of the consensus and the per-rater confusions.

    The class prior is the empirical frequency of the majority-vote map,
    computed once at initialization. Each iteration takes the exact
    posterior under the current matrices (E-step) and refits smoothed soft
    counts (M-step); iteration stops when no matrix entry moves by
    ``config.tol`` or the cap is reached.
    """
    if config is None:
        config = StapleConfig()
    s = stack.shape
    prior = empirical_class_prior(stack, config.smoothing)
    theta = symmetric_confusions(s.raters, s.classes, config.init_diagonal)
    posterior = None
    estimate = None
    for _ in range(config.max_iterations):
        model = RaterGenerativeModel(prior, theta)
        posterior = bayes_oracle(stack, model)
        estimate = estimate_confusion(stack, posterior, config.smoothing)
        delta = np.abs(estimate.confusions - theta).max()
        theta = estimate.confusions
        if delta < config.tol:
            break
    assert posterior is not None and estimate is not None
    return posterior, estimate
