"""Synthetic optic disc/cup style data with a portable RNG.

Gold masks are two nested ellipses on a background: class 2 (cup) strictly
inside class 1's region (disc), class 0 elsewhere. Rater corruptions apply
an optional boundary jitter (morphological grow/shrink of cup then disc)
followed by per-pixel label flips drawn from confusion-matrix rows.

Randomness comes from SplitMix64 so corpora are byte-identical across
platforms and runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidClassError, ShapeMismatchError
from .fusion import _check_confusions
from .grids import ClassGrid, GridShape, LabelStack

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class Rng:
    """SplitMix64 stream.

    State advances by a fixed odd constant and each output is a stateless
    mix of the new state, so a block of draws can be produced in one shot
    without changing the sequence.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform in [0, 1) from the high 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def floats(self, n: int) -> np.ndarray:
        """The next ``n`` uniforms, identical to n ``next_float`` calls."""
        with np.errstate(over="ignore"):
            states = (
                np.uint64(self._state)
                + np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
            )
            z = states
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GOLDEN) & _MASK64
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


@dataclass(frozen=True)
class GoldSpec:
    """Nested-ellipse geometry; centers and semi-axes are fractions of H/W."""

    height: int
    width: int
    disc_center: "tuple[float, float]" = (0.5, 0.5)
    disc_axes: "tuple[float, float]" = (0.35, 0.35)
    cup_center: "tuple[float, float]" = (0.5, 0.5)
    cup_axes: "tuple[float, float]" = (0.18, 0.18)

    def __post_init__(self) -> None:
        if self.height < 1 or self.width < 1:
            raise ShapeMismatchError("grid must be at least 1x1")
        for name, axes in (("disc", self.disc_axes), ("cup", self.cup_axes)):
            if axes[0] < 0 or axes[1] < 0:
                raise ValueError(f"{name} semi-axes must be >= 0")


@dataclass(frozen=True, eq=False)
class RaterSpec:
    """Per-rater corruption: confusion rows, jitter radius, stream offset."""

    confusion: np.ndarray
    boundary_jitter: int = 0
    seed_offset: int = 0

    def __post_init__(self) -> None:
        theta = np.asarray(self.confusion, dtype=np.float64)
        theta = _check_confusions(theta[None], theta.shape[-1], 1)[0]
        theta.setflags(write=False)
        object.__setattr__(self, "confusion", theta)
        if self.boundary_jitter < 0:
            raise ValueError("boundary_jitter must be >= 0")


def _ellipse_mask(spec_hw: "tuple[int, int]", center: "tuple[float, float]",
                  axes: "tuple[float, float]") -> np.ndarray:
    h, w = spec_hw
    cy, cx = center[0] * h, center[1] * w
    a, b = axes[0] * h, axes[1] * w
    yy = np.arange(h)[:, None] + 0.5 - cy
    xx = np.arange(w)[None, :] + 0.5 - cx
    if a == 0 or b == 0:
        return np.zeros((h, w), dtype=bool)
    return (yy / a) ** 2 + (xx / b) ** 2 <= 1.0


def make_gold(spec: GoldSpec) -> ClassGrid:
    """Render the nested-ellipse gold mask (K = 3).

    Ellipse membership is evaluated at pixel centers. Raises
    InvalidClassError when the cup region is not strictly inside the disc.
    """
    disc = _ellipse_mask((spec.height, spec.width), spec.disc_center, spec.disc_axes)
    cup = _ellipse_mask((spec.height, spec.width), spec.cup_center, spec.cup_axes)
    if (cup & ~disc).any():
        raise InvalidClassError("cup region leaks outside the disc")
    if disc.any() and cup.sum() == disc.sum():
        raise InvalidClassError("cup region must be strictly inside the disc")
    cells = np.zeros((spec.height, spec.width), dtype=np.int64)
    cells[disc] = 1
    cells[cup] = 2
    return ClassGrid(GridShape(spec.height, spec.width, 3), cells)


def _shift(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    yt = slice(max(-dy, 0), h + min(-dy, 0))
    xt = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = mask[yt, xt]
    return out


def dilate(mask: np.ndarray, rounds: int) -> np.ndarray:
    """4-connected binary dilation; pixels outside the grid stay background."""
    out = mask.copy()
    for _ in range(rounds):
        out = out | _shift(out, 1, 0) | _shift(out, -1, 0) | _shift(out, 0, 1) | _shift(out, 0, -1)
    return out


def erode(mask: np.ndarray, rounds: int) -> np.ndarray:
    """4-connected binary erosion; pixels outside the grid count as background."""
    out = mask.copy()
    for _ in range(rounds):
        out = out & _shift(out, 1, 0) & _shift(out, -1, 0) & _shift(out, 0, 1) & _shift(out, 0, -1)
    return out


def _jitter(cells: np.ndarray, rounds: int, grow: bool) -> np.ndarray:
    op = dilate if grow else erode
    cup = op(cells == 2, rounds)
    disc = op(cells >= 1, rounds)
    out = np.zeros_like(cells)
    out[disc] = 1
    out[cup & disc] = 2
    return out


def corrupt(gold: ClassGrid, raters: "list[RaterSpec]", seed: int) -> LabelStack:
    """Draw a rater label stack from the gold mask.

    Each rater uses its own SplitMix64 stream ``Rng(seed + seed_offset)``.
    With a positive jitter radius one uniform decides grow (< 0.5) versus
    shrink, the cup and then the disc mask are morphed by that many rounds,
    and finally every pixel's label is drawn row-major from the confusion
    row of its (jittered) class.
    """
    if not raters:
        raise ShapeMismatchError("need at least one rater spec")
    k = gold.shape.classes
    for r in raters:
        if r.confusion.shape[-1] != k:
            raise ShapeMismatchError(
                f"rater confusion is {r.confusion.shape[-1]} classes, gold has {k}"
            )
        if r.boundary_jitter > 0 and k != 3:
            raise InvalidClassError("boundary jitter is defined for 3-class masks only")
    h, w = gold.shape.height, gold.shape.width
    labels = np.empty((len(raters), h, w), dtype=np.int64)
    for m, rspec in enumerate(raters):
        rng = Rng(seed + rspec.seed_offset)
        cells = gold.cells
        if rspec.boundary_jitter > 0:
            grow = rng.next_float() < 0.5
            cells = _jitter(cells, rspec.boundary_jitter, grow)
        cum = np.cumsum(rspec.confusion, axis=1)
        rows = cum[cells.ravel()]
        u = rng.floats(h * w)
        drawn = (rows <= u[:, None]).sum(axis=1)
        labels[m] = np.minimum(drawn, k - 1).reshape(h, w)
    shape = GridShape(h, w, k, len(raters))
    return LabelStack(shape, labels)
