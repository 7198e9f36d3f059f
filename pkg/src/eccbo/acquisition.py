"""Contextual GP-LCB acquisition and its deterministic minimization over a
box for a fixed context."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .gp import GpPosterior, gp_predict


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of admissible decision vectors."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box is empty: lower > upper on some coordinate")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        return (
            x.shape[0] == self.dim
            and bool(np.all(x >= self.lower))
            and bool(np.all(x <= self.upper))
        )

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float).reshape(-1), self.lower, self.upper)

    def concat(self, other: "Box") -> "Box":
        return Box(
            np.concatenate((self.lower, other.lower)),
            np.concatenate((self.upper, other.upper)),
        )


@dataclass(frozen=True)
class AcquisitionConfig:
    """beta is the exploration weight; sqrt(beta) multiplies the posterior
    standard deviation.  multistart_count local descents run from a seeded
    low-discrepancy start set (the box center always leads the sequence)."""

    beta: float = 4.0
    multistart_count: int = 8
    local_steps: int = 120
    seed: int = 0

    def __post_init__(self):
        if self.beta < 0.0:
            raise ValueError("beta must be non-negative")
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be at least 1")


def lcb(post: GpPosterior, x: np.ndarray, d: np.ndarray, cfg: AcquisitionConfig) -> float:
    """Lower confidence bound mean - sqrt(beta) * std at decision x, context d."""
    joint = np.concatenate(
        (np.asarray(x, dtype=float).reshape(-1), np.asarray(d, dtype=float).reshape(-1))
    )
    mean, var = gp_predict(post, joint)
    return mean - math.sqrt(cfg.beta) * math.sqrt(var)


def _start_points(box: Box, count: int, seed: int) -> np.ndarray:
    """Deterministic multistart set: box center first, then scrambled-Sobol
    points (scrambling is seeded, so the whole sequence is reproducible)."""
    pts = [box.center()]
    if count > 1:
        sob = qmc.Sobol(d=box.dim, scramble=True, seed=seed)
        n = 2 ** math.ceil(math.log2(count))
        unit = sob.random(n)[: count - 1]
        pts.extend(box.lower + unit * (box.upper - box.lower))
    return np.asarray(pts)


def optimize_acquisition(
    post: GpPosterior, d_next: np.ndarray, box: Box, cfg: AcquisitionConfig
) -> np.ndarray:
    """Minimize the LCB over the box for the given context.

    Multistart L-BFGS-B from the deterministic start set; the returned point
    is clipped to the box (hard containment guarantee) and its value never
    exceeds the value at any evaluated start point.  Ties break toward the
    earliest candidate, so a flat surface returns the box center.
    """
    d_next = np.asarray(d_next, dtype=float).reshape(-1)

    def objective(x: np.ndarray) -> float:
        return lcb(post, x, d_next, cfg)

    bounds = list(zip(box.lower, box.upper))
    best_x: np.ndarray | None = None
    best_val = math.inf
    for start in _start_points(box, cfg.multistart_count, cfg.seed):
        for cand in (start, _local_descent(objective, start, bounds, cfg.local_steps)):
            val = objective(cand)
            if val < best_val:
                best_val = val
                best_x = cand
    assert best_x is not None
    return box.clip(best_x)


def _local_descent(objective, start: np.ndarray, bounds, max_iter: int) -> np.ndarray:
    res = optimize.minimize(
        objective,
        start,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter},
    )
    return res.x
