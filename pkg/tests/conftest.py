"""Shared fixtures and independent oracles for the test suite.

The oracles here are deliberately written as plain loops so they share no
code path with the library: brute-force per-pixel Bayes enumeration,
window-by-window SSIM, and integer vote counting.
"""

from __future__ import annotations

import numpy as np
import pytest

import raterfuse as rf
from raterfuse.grids import ClassGrid, GridShape, LabelStack, PriorMap


def brute_posterior(labels: np.ndarray, theta: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Exact P(true class | observed labels) by direct enumeration.

    labels: (M, H, W) ints; theta: (M, K, K) row-stochastic; prior: (K,).
    """
    m, h, w = labels.shape
    k = prior.shape[0]
    out = np.zeros((h, w, k))
    for i in range(h):
        for j in range(w):
            for kk in range(k):
                p = prior[kk]
                for r in range(m):
                    p *= theta[r, kk, labels[r, i, j]]
                out[i, j, kk] = p
            out[i, j] /= out[i, j].sum()
    return out


def vote_count_oracle(labels: np.ndarray, classes: int) -> np.ndarray:
    m, h, w = labels.shape
    counts = np.zeros((h, w, classes), dtype=np.int64)
    for r in range(m):
        for i in range(h):
            for j in range(w):
                counts[i, j, labels[r, i, j]] += 1
    return counts


def ssim_reference(a: np.ndarray, b: np.ndarray, window: int = 7,
                   c1: float = 1e-4, c2: float = 9e-4) -> float:
    """Per-window SSIM with replicate padding and population statistics."""
    radius = window // 2
    channel_means = []
    for ch in range(a.shape[-1]):
        x = np.pad(a[..., ch], radius, mode="edge")
        y = np.pad(b[..., ch], radius, mode="edge")
        vals = []
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                wx = x[i:i + window, j:j + window]
                wy = y[i:i + window, j:j + window]
                mx, my = wx.mean(), wy.mean()
                vx = ((wx - mx) ** 2).mean()
                vy = ((wy - my) ** 2).mean()
                cxy = ((wx - mx) * (wy - my)).mean()
                num = (2 * mx * my + c1) * (2 * cxy + c2)
                den = (mx * mx + my * my + c1) * (vx + vy + c2)
                vals.append(num / den)
        channel_means.append(np.mean(vals))
    return float(np.mean(channel_means))


def random_stack(rng: np.random.Generator, height: int, width: int,
                 classes: int, raters: int) -> LabelStack:
    shape = GridShape(height, width, classes)
    labels = rng.integers(0, classes, size=(raters, height, width))
    return LabelStack.from_grids([ClassGrid(shape, labels[m]) for m in range(raters)])


def random_model(rng: np.random.Generator, classes: int, raters: int) -> rf.RaterGenerativeModel:
    theta = rng.random((raters, classes, classes)) + 0.1
    theta /= theta.sum(axis=-1, keepdims=True)
    prior = rng.random(classes) + 0.1
    prior /= prior.sum()
    return rf.RaterGenerativeModel(prior, theta)


def synth_stack(diagonals, seed: int, height: int = 64, width: int = 64, jitter: int = 0):
    """Nested-ellipse gold mask plus per-rater flip corruption."""
    gold = rf.make_gold(rf.GoldSpec(height, width))
    raters = [
        rf.RaterSpec(rf.symmetric_confusions(1, 3, d)[0], boundary_jitter=jitter, seed_offset=m)
        for m, d in enumerate(diagonals)
    ]
    return gold, rf.corrupt(gold, raters, seed)


def empirical_prior_map(stack: LabelStack) -> PriorMap:
    probs = rf.empirical_class_prior(stack)
    s = stack.shape
    return PriorMap.from_class_probs(GridShape(s.height, s.width, s.classes), probs)


def mean_dice(grid: ClassGrid, reference: ClassGrid) -> float:
    spec = rf.DiceSpec.default_for(grid.shape.classes)
    return float(np.mean(list(rf.dice(grid, reference, spec).values())))


@pytest.fixture(scope="session")
def gold64():
    return rf.make_gold(rf.GoldSpec(64, 64))
