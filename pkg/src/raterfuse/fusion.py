"""Expertness-weighted label fusion.

A consensus segmentation is formed by summing, per pixel and candidate
class, each rater's log-likelihood of having produced its observed label,
adding a prior, and taking a softmax. When the per-rater weights are the
true log observation likelihoods the result is the exact Bayes posterior
over the latent class; ``bayes_oracle`` computes that posterior directly
in the probability domain and serves as the reference implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateModelError, LogDomainError, ShapeMismatchError
from .grids import (
    GridShape,
    LabelStack,
    PriorMap,
    ProbMap,
    require_same_grid,
)

# Probability floor applied before any log.
EPS_PROB = 1e-6

# Row-stochasticity gate for confusion matrices.
ROW_SUM_TOL = 1e-12


class FusionMode(str, Enum):
    """How reconstructed rater probabilities enter the consensus.

    LIKELIHOOD converts each rater's reconstruction into a confusion
    matrix and fuses with the implied log observation likelihoods.
    LITERAL uses the raw log-reconstruction at the observed label as the
    weight; it rewards low-confidence reconstructions with weight 0 and is
    kept only as a reference behavior, not as a sensible default.
    """

    LIKELIHOOD = "likelihood"
    LITERAL = "literal"


def _check_confusions(confusions: np.ndarray, classes: int, raters: int) -> np.ndarray:
    theta = np.asarray(confusions, dtype=np.float64)
    if theta.shape != (raters, classes, classes):
        raise ShapeMismatchError(
            f"confusions shape {theta.shape}, expected {(raters, classes, classes)}"
        )
    if (theta < 0).any():
        raise ValueError("confusion entries must be non-negative")
    err = np.abs(theta.sum(axis=-1) - 1.0).max()
    if err > ROW_SUM_TOL:
        raise ValueError(f"confusion rows must sum to 1 within {ROW_SUM_TOL}, max error {err:g}")
    return theta


@dataclass(frozen=True, eq=False)
class ExpertnessMaps:
    """Per-rater log-likelihood fields, shape (M, H, W, K).

    ``maps[m, i, j, k]`` is the log-probability that rater m produces its
    observed label at pixel (i, j) when the true class is k. Entries are
    finite and <= 0.
    """

    shape: GridShape
    maps: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.maps, dtype=np.float64)
        s = self.shape
        expected = (s.raters, s.height, s.width, s.classes)
        if w.shape != expected:
            raise ShapeMismatchError(f"maps shape {w.shape}, expected {expected}")
        if not np.isfinite(w).all():
            raise LogDomainError("expertness entries must be finite log-probabilities")
        if w.max(initial=-1.0) > 0.0:
            raise LogDomainError("expertness entries must be <= 0")
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        object.__setattr__(self, "maps", w)


@dataclass(frozen=True, eq=False)
class RaterGenerativeModel:
    """Class prior plus per-rater confusion matrices.

    ``class_prior`` is a (K,) probability vector. ``confusions`` is
    (M, K, K) with row k of rater m giving P(rater says c | true class k).
    """

    class_prior: np.ndarray
    confusions: np.ndarray

    def __post_init__(self) -> None:
        prior = np.asarray(self.class_prior, dtype=np.float64)
        if prior.ndim != 1:
            raise ShapeMismatchError("class_prior must be a vector")
        if (prior < 0).any() or abs(prior.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("class_prior must be non-negative and sum to 1")
        theta = _check_confusions(self.confusions, prior.shape[0], np.asarray(self.confusions).shape[0])
        prior = np.ascontiguousarray(prior)
        prior.setflags(write=False)
        theta.setflags(write=False)
        object.__setattr__(self, "class_prior", prior)
        object.__setattr__(self, "confusions", theta)

    @property
    def raters(self) -> int:
        return self.confusions.shape[0]

    @property
    def classes(self) -> int:
        return self.class_prior.shape[0]


def floor_confusion(theta: np.ndarray, eps: float = EPS_PROB) -> np.ndarray:
    """Mix a row-stochastic matrix with the uniform row: (1 - K*eps)*theta + eps.

    Every entry becomes >= eps while rows keep summing to 1; the identity
    matrix floors to diagonal 1 - (K-1)*eps and off-diagonal eps.
    """
    theta = np.asarray(theta, dtype=np.float64)
    k = theta.shape[-1]
    if eps <= 0 or k * eps >= 1:
        raise ValueError("need 0 < eps < 1/K")
    return (1.0 - k * eps) * theta + eps


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def fuse(stack: LabelStack, expertness: ExpertnessMaps, prior: PriorMap) -> ProbMap:
    """Fuse rater labels into a consensus distribution.

    Per pixel and class the logit is the sum of all raters' expertness
    entries plus the prior logit; the output is the softmax over classes.

    Rater contributions are summed in sorted order, so pixels whose vote
    patterns are permutations of one another produce bit-identical logits
    and argmax ties resolve identically.
    """
    require_same_grid(stack.shape, expertness.shape, prior.shape)
    if stack.shape.raters != expertness.shape.raters:
        raise ShapeMismatchError(
            f"stack has {stack.shape.raters} raters, expertness {expertness.shape.raters}"
        )
    contrib = np.sort(expertness.maps, axis=0).sum(axis=0)
    logits = contrib + prior.logits
    s = stack.shape
    return ProbMap(GridShape(s.height, s.width, s.classes), _softmax(logits))


def bayes_oracle(stack: LabelStack, model: RaterGenerativeModel) -> ProbMap:
    """Exact per-pixel posterior over the true class.

    posterior(k) is proportional to class_prior[k] times the product over
    raters of P(observed label | true class k), normalized over k. Raises
    DegenerateModelError when some pixel's normalizer is exactly zero.
    """
    s = stack.shape
    if model.classes != s.classes or model.raters != s.raters:
        raise ShapeMismatchError(
            f"model is {model.raters} raters x {model.classes} classes, stack {s.raters} x {s.classes}"
        )
    lik = np.broadcast_to(model.class_prior, (s.height, s.width, s.classes)).copy()
    for m in range(s.raters):
        # theta[:, labels] has shape (K, H, W); move the class axis last.
        lik *= np.moveaxis(model.confusions[m][:, stack.labels[m]], 0, -1)
    norm = lik.sum(axis=-1)
    if (norm == 0.0).any():
        i, j = np.argwhere(norm == 0.0)[0]
        raise DegenerateModelError(
            f"zero posterior normalizer at pixel ({i}, {j}): every class has likelihood 0"
        )
    return ProbMap(GridShape(s.height, s.width, s.classes), lik / norm[..., None])


def _log_likelihood_maps(labels: np.ndarray, confusions: np.ndarray) -> np.ndarray:
    """Materialize log theta[k, observed] per rater/pixel, shape (M, H, W, K)."""
    if (confusions <= 0).any():
        raise LogDomainError(
            "confusion entries must be strictly positive before taking logs; "
            "apply floor_confusion first"
        )
    log_theta = np.log(confusions)
    maps = [np.moveaxis(log_theta[m][:, labels[m]], 0, -1) for m in range(labels.shape[0])]
    return np.stack(maps)


def expertness_from_model(stack: LabelStack, model: RaterGenerativeModel) -> ExpertnessMaps:
    """Expertness maps implied by a generative model: log theta[k, observed].

    Requires strictly positive confusion entries (floor them first);
    a zero entry would put -inf into the log domain.
    """
    s = stack.shape
    if model.classes != s.classes or model.raters != s.raters:
        raise ShapeMismatchError(
            f"model is {model.raters} raters x {model.classes} classes, stack {s.raters} x {s.classes}"
        )
    return ExpertnessMaps(s, _log_likelihood_maps(stack.labels, model.confusions))


def self_fuse(
    stack: LabelStack,
    rater_probs: "list[ProbMap]",
    mode: FusionMode = FusionMode.LIKELIHOOD,
    eps: float = EPS_PROB,
) -> ProbMap:
    """Fuse rater labels using reconstructed per-rater probability maps.

    ``rater_probs[m]`` estimates the distribution of rater m's label at each
    pixel. In LIKELIHOOD mode each reconstruction is reduced to a confusion
    matrix (soft co-occurrence of reconstruction mass and observed labels)
    and fusion proceeds with the implied expertness maps under a uniform
    prior. In LITERAL mode the logit for class k is the sum over raters of
    one_hot(label)[k] * log(max(reconstruction[k], eps)); weights vanish
    where the reconstruction is confident, so the output tends to favor
    classes nobody voted for. LITERAL is retained for comparison only.
    """
    s = stack.shape
    if len(rater_probs) != s.raters:
        raise ShapeMismatchError(f"need {s.raters} reconstructions, got {len(rater_probs)}")
    for p in rater_probs:
        require_same_grid(s, p.shape)
    mode = FusionMode(mode)
    if mode is FusionMode.LITERAL:
        z = stack.one_hot_view()
        logits = np.zeros((s.height, s.width, s.classes))
        for m in range(s.raters):
            logits += z[m] * np.log(np.maximum(rater_probs[m].values, eps))
        return ProbMap(GridShape(s.height, s.width, s.classes), _softmax(logits))

    # Imported here to avoid a module cycle with expertness.
    from .expertness import soft_confusion
    from .grids import uniform_prior

    confusions = np.stack(
        [
            soft_confusion(stack.labels[m], rater_probs[m].values, eps)
            for m in range(s.raters)
        ]
    )
    maps = ExpertnessMaps(s, _log_likelihood_maps(stack.labels, confusions))
    return fuse(stack, maps, uniform_prior(s))
