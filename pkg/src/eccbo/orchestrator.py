"""Decision-layer orchestration: owns the transformed decision space
(constraint setpoints plus free degrees of freedom), gates observations on
steady state, conditions the cost surrogate, and emits the next setpoint
vector via the acquisition minimizer.

Feasibility is enforced at the type boundary: a DecisionVector can only be
built from values inside the declared box, so no downstream consumer can
ever receive an out-of-box setpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .acquisition import AcquisitionConfig, Box, optimize_acquisition
from .gp import (
    Dataset,
    GpPosterior,
    KernelParams,
    default_params,
    fit_hyperparameters,
    gp_condition,
    should_refit,
)


class BoxViolationError(ValueError):
    """A decision vector landed outside its admissible box."""


@dataclass(frozen=True)
class DecisionVector:
    """Constraint-controller setpoints plus any free degrees of freedom."""

    setpoints: tuple[float, ...]
    free_dofs: tuple[float, ...] = ()

    @classmethod
    def checked(
        cls, values: np.ndarray, box: Box, n_setpoints: int
    ) -> "DecisionVector":
        values = np.asarray(values, dtype=float).reshape(-1)
        if not box.contains(values):
            raise BoxViolationError(
                f"decision {values} outside box [{box.lower}, {box.upper}]"
            )
        return cls(
            setpoints=tuple(float(v) for v in values[:n_setpoints]),
            free_dofs=tuple(float(v) for v in values[n_setpoints:]),
        )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.setpoints + self.free_dofs, dtype=float)


@dataclass
class RtoMetrics:
    """Per-update violation and regret bookkeeping.

    Violations are the positive part of the negated constraint slacks, so
    they are zero exactly when the plant sits feasible at the sample.
    """

    violations: list[tuple[float, ...]] = field(default_factory=list)
    cumulative_violation: float = 0.0
    regrets: list[float] = field(default_factory=list)
    cumulative_regret: float = 0.0

    def violation_update(self, g_values) -> None:
        v = tuple(max(0.0, -float(g)) for g in g_values)
        self.violations.append(v)
        self.cumulative_violation += sum(v)

    def regret_update(self, y_steady: float, f_star: float) -> None:
        r = float(y_steady) - float(f_star)
        self.regrets.append(r)
        self.cumulative_regret += r


@dataclass
class EccboConfig:
    box: Box
    context_box: Box
    n_setpoints: int
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    init_count: int = 3
    seed: int = 0
    mean_shift: float | None = None
    hyper_restarts: int = 4
    refit_dense_until: int = 50
    refit_every: int = 5

    def __post_init__(self):
        if not 0 <= self.n_setpoints <= self.box.dim:
            raise ValueError("n_setpoints must lie within the decision dimension")
        if self.init_count < 1:
            raise ValueError("init_count must be at least 1")


def initial_design(box: Box, count: int) -> np.ndarray:
    """First ``count`` decisions before any surrogate exists: the box
    center, then staggered points from the unscrambled Sobol sequence (its
    leading entries are the origin and the center, which are skipped /
    already used)."""
    pts = [box.center()]
    if count > 1:
        sob = qmc.Sobol(d=box.dim, scramble=False)
        n = 2 ** max(3, math.ceil(math.log2(count + 2)))
        unit = sob.random(n)[2 : count + 1]
        pts.extend(box.lower + unit * (box.upper - box.lower))
    return np.asarray(pts[:count])


class Eccbo:
    """Sequential decision maker over the joint (setpoint, context) space.

    Drive it with ``step`` (next decision for a context) and
    ``record_observation`` (steady-state cost sample, minimization sign
    convention).  The surrogate is reconditioned on every record and its
    hyperparameters refit per the configured policy.
    """

    def __init__(self, cfg: EccboConfig):
        self.cfg = cfg
        self.observations: list[tuple[np.ndarray, np.ndarray, float, float]] = []
        self.metrics = RtoMetrics()
        self._init_points = initial_design(cfg.box, cfg.init_count)
        self._joint_box = cfg.box.concat(cfg.context_box)
        self._params: KernelParams = default_params(self._joint_box.dim)
        self._posterior: GpPosterior | None = None

    @property
    def posterior(self) -> GpPosterior:
        if self._posterior is None:
            self._posterior = gp_condition(self._empty_dataset(), self._params)
        return self._posterior

    def _empty_dataset(self) -> Dataset:
        return Dataset.from_box(
            np.zeros((0, self._joint_box.dim)),
            np.zeros(0),
            self._joint_box.lower,
            self._joint_box.upper,
            mean_shift=self.cfg.mean_shift,
        )

    def step(self, d_next: np.ndarray) -> DecisionVector:
        """Next decision for context ``d_next``: an initial-design point
        until ``init_count`` observations exist, then the LCB minimizer.
        Always inside the box, and deterministic for a fixed seed."""
        d_next = np.asarray(d_next, dtype=float).reshape(-1)
        if not np.all(np.isfinite(d_next)):
            raise ValueError("context must be finite")
        t = len(self.observations)
        if t < self.cfg.init_count:
            x = self._init_points[t]
        else:
            acq = AcquisitionConfig(
                beta=self.cfg.acquisition.beta,
                multistart_count=self.cfg.acquisition.multistart_count,
                local_steps=self.cfg.acquisition.local_steps,
                seed=self.cfg.seed + t,
            )
            x = optimize_acquisition(self.posterior, d_next, self.cfg.box, acq)
        return DecisionVector.checked(x, self.cfg.box, self.cfg.n_setpoints)

    def record_observation(
        self,
        x: DecisionVector,
        d: np.ndarray,
        y_steady: float,
        timestamp: float,
    ) -> None:
        """Append one steady-state observation and recondition the surrogate.

        The caller certifies steadiness (the detector gate).  Timestamps
        must be strictly increasing; out-of-box decisions cannot exist by
        construction but are rejected defensively anyway.
        """
        arr = x.as_array()
        if not self.cfg.box.contains(arr):
            raise BoxViolationError(f"observation decision {arr} outside box")
        d = np.asarray(d, dtype=float).reshape(-1)
        if self.observations and timestamp <= self.observations[-1][3]:
            raise ValueError("observation timestamps must be strictly increasing")
        self.observations.append((arr, d, float(y_steady), float(timestamp)))
        self._recondition()

    def _recondition(self) -> None:
        data = self._dataset()
        t = data.size
        if should_refit(t, self.cfg.refit_dense_until, self.cfg.refit_every):
            self._params = fit_hyperparameters(
                data, restarts=self.cfg.hyper_restarts, seed=self.cfg.seed
            )
        self._posterior = gp_condition(data, self._params)

    def _dataset(self) -> Dataset:
        if not self.observations:
            return self._empty_dataset()
        inputs = np.array([np.concatenate((x, d)) for x, d, _, _ in self.observations])
        targets = np.array([y for _, _, y, _ in self.observations])
        return Dataset.from_box(
            inputs,
            targets,
            self._joint_box.lower,
            self._joint_box.upper,
            mean_shift=self.cfg.mean_shift,
        )


def eccbo_step(orch: Eccbo, d_next: np.ndarray) -> DecisionVector:
    return orch.step(d_next)


def record_observation(
    orch: Eccbo, x: DecisionVector, d: np.ndarray, y_steady: float, timestamp: float
) -> None:
    orch.record_observation(x, d, y_steady, timestamp)
