"""Self-calibrating recurrence and the half-quadratic weight solver.

``recur`` alternates consensus fusion with confusion re-estimation: fuse
under the current expertness, refit per-rater confusion matrices against
the fused map, convert them back into expertness, repeat. Raters whose
labels the consensus explains well gain weight; noisy raters lose it.

``hq_solve`` treats the per-rater weights themselves as the unknown and
alternates two exact subproblems, an entrywise closed form for the weights
and a linear smoothing system for an auxiliary mask field, under a
geometrically increasing coupling constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import symmetric_confusions
from .errors import NumericalFailureError, ShapeMismatchError
from .expertness import (
    ConfusionEstimate,
    estimate_confusion,
    predict_rater_labels,
)
from .fusion import (
    ExpertnessMaps,
    FusionMode,
    _log_likelihood_maps,
    fuse,
    self_fuse,
)
from .grids import GridShape, LabelStack, PriorMap, ProbMap, uniform_prior
from .metrics import SsimSpec, cross_entropy, ssim

DEFAULT_RECURRENCES = 4


@dataclass(frozen=True)
class RecurrenceConfig:
    """Recurrence settings.

    ``prior`` of None means uniform. ``init_diagonal`` sets the
    equal-expertise starting confusion (same symmetric matrix for every
    rater); the first fused map under it reproduces the majority vote's
    argmax exactly, ties included.
    """

    max_recurrences: int = DEFAULT_RECURRENCES
    tol: float = 1e-6
    smoothing: float = 1e-6
    mode: FusionMode = FusionMode.LIKELIHOOD
    prior: PriorMap | None = None
    init_diagonal: float = 0.9

    def __post_init__(self) -> None:
        if self.max_recurrences < 1:
            raise ValueError("max_recurrences must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if not 0.0 < self.init_diagonal < 1.0:
            raise ValueError("init_diagonal must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class RecurrenceStep:
    """One iteration: fused map, confusion estimate, agreement metrics.

    ``rater_ce[m]`` is the cross-entropy between rater m's predicted and
    observed labels. ``ssim_prev`` compares the fused map with the previous
    iteration's and is None on the first step. ``converged`` records
    whether the fused map moved less than the tolerance.
    """

    fused: ProbMap
    confusion: ConfusionEstimate
    rater_ce: "tuple[float, ...]"
    ssim_prev: float | None
    converged: bool


@dataclass(frozen=True, eq=False)
class RecurrenceTrace:
    """Ordered recurrence steps, at most ``max_recurrences`` of them."""

    steps: "tuple[RecurrenceStep, ...]"

    @property
    def iterations(self) -> int:
        return len(self.steps)

    @property
    def final_fused(self) -> ProbMap:
        return self.steps[-1].fused

    @property
    def final_confusion(self) -> ConfusionEstimate:
        return self.steps[-1].confusion

    @property
    def converged(self) -> bool:
        return self.steps[-1].converged


def _trace_ssim_spec(shape: GridShape) -> SsimSpec:
    # Shrink the window on grids smaller than the default 7x7.
    w = min(7, shape.height, shape.width)
    if w % 2 == 0:
        w -= 1
    return SsimSpec(window=max(w, 1))


def recur(stack: LabelStack, config: RecurrenceConfig | None = None) -> RecurrenceTrace:
    """Run the fuse / re-estimate recurrence on a label stack.

    Every iteration fuses with the current expertness, fits smoothed
    confusion matrices against the fused map, and derives the next
    expertness from them. Iteration stops once the fused map's max-abs
    change drops below ``config.tol`` (recorded on the step) or after
    ``config.max_recurrences`` steps. The trace is deterministic in
    (stack, config).

    In LITERAL mode iterations after the first fuse with the raw
    log-reconstruction weights instead of confusion-implied likelihoods;
    the first iteration is shared so both modes start from the same
    equal-expertise consensus.
    """
    if config is None:
        config = RecurrenceConfig()
    s = stack.shape
    prior = config.prior if config.prior is not None else uniform_prior(s)
    if not prior.shape.same_grid(s):
        raise ShapeMismatchError(f"prior grid {prior.shape} does not match stack {s}")
    ssim_spec = _trace_ssim_spec(s)
    theta = symmetric_confusions(s.raters, s.classes, config.init_diagonal)
    mode = FusionMode(config.mode)

    steps: "list[RecurrenceStep]" = []
    prev_fused: ProbMap | None = None
    prev_estimate: ConfusionEstimate | None = None
    for iteration in range(1, config.max_recurrences + 1):
        if mode is FusionMode.LITERAL and prev_fused is not None and prev_estimate is not None:
            recon = predict_rater_labels(prev_fused, prev_estimate)
            fused = self_fuse(stack, recon, FusionMode.LITERAL)
        else:
            maps = ExpertnessMaps(s, _log_likelihood_maps(stack.labels, theta))
            fused = fuse(stack, maps, prior)
        estimate = estimate_confusion(stack, fused, config.smoothing)
        recon = predict_rater_labels(fused, estimate)
        rater_ce = tuple(
            cross_entropy(recon[m], stack.rater(m)) for m in range(s.raters)
        )
        if prev_fused is None:
            ssim_prev = None
            step_converged = False
        else:
            ssim_prev = ssim(fused, prev_fused, ssim_spec)
            delta = float(np.abs(fused.values - prev_fused.values).max())
            step_converged = delta < config.tol
        steps.append(RecurrenceStep(fused, estimate, rater_ce, ssim_prev, step_converged))
        if step_converged:
            break
        theta = estimate.confusions
        prev_fused = fused
        prev_estimate = estimate
    return RecurrenceTrace(tuple(steps))


def converged(trace: RecurrenceTrace, tol: float) -> bool:
    """Whether the trace's last fused update moved less than ``tol``.

    A single-step trace has no update to measure and reports False.
    The comparison is strict, so a delta exactly equal to ``tol`` does
    not count as converged.
    """
    if not trace.steps:
        raise ValueError("trace has no steps")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if len(trace.steps) < 2:
        return False
    delta = float(
        np.abs(trace.steps[-1].fused.values - trace.steps[-2].fused.values).max()
    )
    return delta < tol


@dataclass(frozen=True)
class HQConfig:
    """Half-quadratic solver settings.

    ``beta0 * kappa**i`` is the coupling weight at outer iteration i;
    ``gamma`` weighs the gradient penalty on the auxiliary field;
    ``inner_iterations`` bounds the Jacobi sweeps per outer iteration.
    """

    beta0: float = 1.0
    kappa: float = 2.0
    gamma: float = 0.1
    inner_iterations: int = 50
    max_outer: int = 25
    tol: float = 1e-8

    def __post_init__(self) -> None:
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.kappa <= 1.0:
            raise ValueError("kappa must be > 1")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True, eq=False)
class HQState:
    """Solver result: weights (M, H, W, K), auxiliary field (H, W, K),
    and per accepted outer iteration the recorded objective, the label-fit
    term 0.5*||W - Z||^2, and the coupling weight used."""

    weights: np.ndarray
    auxiliary: np.ndarray
    objectives: "tuple[float, ...]"
    label_fits: "tuple[float, ...]"
    betas: "tuple[float, ...]"

    @property
    def iterations(self) -> int:
        return len(self.objectives)


def _neighbor_degree(height: int, width: int) -> np.ndarray:
    deg = np.full((height, width), 4.0)
    deg[0, :] -= 1.0
    deg[-1, :] -= 1.0
    deg[:, 0] -= 1.0
    deg[:, -1] -= 1.0
    return deg


def _neighbor_sum(v: np.ndarray) -> np.ndarray:
    nb = np.zeros_like(v)
    nb[1:, :, :] += v[:-1, :, :]
    nb[:-1, :, :] += v[1:, :, :]
    nb[:, 1:, :] += v[:, :-1, :]
    nb[:, :-1, :] += v[:, 1:, :]
    return nb


def _gradient_energy(v: np.ndarray) -> float:
    # Forward differences with Neumann boundaries: no wrap, border
    # differences simply absent.
    dh = v[1:, :, :] - v[:-1, :, :]
    dw = v[:, 1:, :] - v[:, :-1, :]
    return float((dh * dh).sum() + (dw * dw).sum())


def hq_solve(
    stack: LabelStack,
    config: HQConfig | None = None,
    initial: ProbMap | None = None,
) -> HQState:
    """Alternate the two half-quadratic subproblems on a label stack.

    Subproblem 1 updates every weight entry in closed form,
    w = (beta*z*v + z) / (beta*z*z + 1) with z the one-hot label entry.
    Subproblem 2 refits the auxiliary field by running Jacobi sweeps on
    (beta*I + gamma*L) V = beta * X, where L is the 4-neighbor grid
    Laplacian per class channel and X the rater-mean of the weighted
    labels; sweeps start from the previous field. The coupling weight
    beta = beta0 * kappa**i is a continuation schedule internal to the
    subproblems; progress is measured on the fit of the weighted labels to
    the consensus field at unit weight,

        J = 0.5*sum_m ||W_m Z_m - V||^2 + 0.5*gamma*M*||grad V||^2,

    recorded once per accepted outer iteration, alongside the label-fit
    term 0.5*||W - Z||^2. A step that would increase J is discarded and
    iteration stops with the previous iterate, so the recorded history is
    non-increasing by construction; iteration also stops when the decrease
    falls below ``config.tol`` or ``config.max_outer`` is reached. The
    auxiliary field starts at ``initial`` (default: the vote-fraction
    map).

    Raises NumericalFailureError if the objective turns non-finite.
    """
    if config is None:
        config = HQConfig()
    s = stack.shape
    z = stack.one_hot_view()
    if initial is not None:
        if not initial.shape.same_grid(s):
            raise ShapeMismatchError(f"initial grid {initial.shape} does not match stack {s}")
        v = initial.values.copy()
    else:
        v = z.mean(axis=0)
    deg = _neighbor_degree(s.height, s.width)[..., None]
    raters = float(s.raters)

    objectives: "list[float]" = []
    label_fits: "list[float]" = []
    betas: "list[float]" = []
    w = np.zeros_like(z)
    for it in range(config.max_outer):
        beta = config.beta0 * config.kappa**it
        w_new = z * (beta * v + 1.0) / (beta * z + 1.0)
        wz = w_new * z
        x = wz.mean(axis=0)
        denom = beta + config.gamma * deg
        b = beta * x
        v_new = v
        for _ in range(config.inner_iterations):
            v_new = (b + config.gamma * _neighbor_sum(v_new)) / denom
        coupling = float(((wz - v_new) ** 2).sum())
        objective = 0.5 * coupling + 0.5 * config.gamma * raters * _gradient_energy(v_new)
        if not np.isfinite(objective):
            raise NumericalFailureError(
                f"objective became non-finite at outer iteration {it + 1}"
            )
        if objectives and objective > objectives[-1]:
            break
        w = w_new
        v = v_new
        objectives.append(objective)
        label_fits.append(0.5 * float(((w - z) ** 2).sum()))
        betas.append(beta)
        if len(objectives) >= 2 and objectives[-2] - objectives[-1] < config.tol:
            break
    return HQState(w, v, tuple(objectives), tuple(label_fits), tuple(betas))
