"""Gaussian-process regression over the joint (decision, context) space.

The covariance is an ARD squared-exponential plus a constant bias term.
Inputs are normalized per-dimension to [0, 1] using a declared box, targets
are standardized (zero mean, unit variance) unless a constant prior shift is
supplied, and all conditioning runs through a jittered Cholesky factor.
Everything here is a pure function of its arguments; posterior values are
immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve, cholesky, solve_triangular

_JITTERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
_VAR_CLAMP = -1e-10


class NonPositiveDefiniteError(np.linalg.LinAlgError):
    """Covariance factorization failed even after jitter escalation."""


class InsufficientDataError(ValueError):
    """Hyperparameter fitting needs at least two observations."""


@dataclass(frozen=True)
class KernelParams:
    """ARD squared-exponential + bias kernel hyperparameters, with additive
    observation noise.  All values live in normalized units."""

    rbf_variance: float
    lengthscales: np.ndarray
    bias_variance: float
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if not (self.rbf_variance > 0.0 and self.noise_variance > 0.0):
            raise ValueError("rbf_variance and noise_variance must be positive")
        if self.bias_variance < 0.0:
            raise ValueError("bias_variance must be non-negative")
        if not np.all(ls > 0.0):
            raise ValueError("every lengthscale must be positive")

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]


def default_params(dim: int) -> KernelParams:
    return KernelParams(
        rbf_variance=1.0,
        lengthscales=np.full(dim, 0.5),
        bias_variance=0.1,
        noise_variance=1e-4,
    )


@dataclass(frozen=True)
class Dataset:
    """Observed (input, target) pairs plus the affine normalization maps.

    ``inputs`` holds joint points [decision, context] in original units,
    one row per observation.  Normalized inputs are (x - shift) / scale;
    normalized targets are (y - target_shift) / target_scale.
    """

    inputs: np.ndarray
    targets: np.ndarray
    input_shift: np.ndarray
    input_scale: np.ndarray
    target_shift: float
    target_scale: float

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        if inputs.size == 0:
            inputs = inputs.reshape(0, self.input_shift.shape[0] if self.input_shift.size else 0)
        targets = np.asarray(self.targets, dtype=float).reshape(-1)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        if inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs and targets must have matching row counts")
        if inputs.size and not np.all(np.isfinite(inputs)):
            raise ValueError("inputs must be finite")
        if targets.size and not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        if np.any(np.asarray(self.input_scale) == 0.0) or self.target_scale == 0.0:
            raise ValueError("normalization scales must be nonzero")

    @classmethod
    def from_box(
        cls,
        inputs: np.ndarray,
        targets: np.ndarray,
        lower: np.ndarray,
        upper: np.ndarray,
        mean_shift: float | None = None,
    ) -> "Dataset":
        """Normalize inputs to [0, 1] over the declared box; standardize
        targets around their mean (or around ``mean_shift`` when a constant
        prior mean is being injected)."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        scale = upper - lower
        scale = np.where(scale > 0.0, scale, 1.0)
        targets = np.asarray(targets, dtype=float).reshape(-1)
        if mean_shift is not None:
            t_shift = float(mean_shift)
        else:
            t_shift = float(targets.mean()) if targets.size else 0.0
        t_scale = 1.0
        if targets.size >= 2:
            sd = float(targets.std())
            if sd > 1e-12:
                t_scale = sd
        return cls(
            inputs=np.asarray(inputs, dtype=float).reshape(len(targets), -1)
            if targets.size
            else np.zeros((0, lower.shape[0])),
            targets=targets,
            input_shift=lower,
            input_scale=scale,
            target_shift=t_shift,
            target_scale=t_scale,
        )

    @classmethod
    def raw(cls, inputs: np.ndarray, targets: np.ndarray) -> "Dataset":
        """Identity normalization: data already in normalized units."""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        dim = inputs.shape[1] if inputs.size else 1
        return cls(
            inputs=inputs,
            targets=np.asarray(targets, dtype=float),
            input_shift=np.zeros(dim),
            input_scale=np.ones(dim),
            target_shift=0.0,
            target_scale=1.0,
        )

    @property
    def size(self) -> int:
        return self.targets.shape[0]

    @property
    def dim(self) -> int:
        return self.input_shift.shape[0]

    def normalized_inputs(self) -> np.ndarray:
        if self.size == 0:
            return np.zeros((0, self.dim))
        return (self.inputs - self.input_shift) / self.input_scale

    def normalized_targets(self) -> np.ndarray:
        return (self.targets - self.target_shift) / self.target_scale

    def normalize_point(self, point: np.ndarray) -> np.ndarray:
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.shape[0] != self.dim:
            raise ValueError(
                f"point has dimension {point.shape[0]}, dataset expects {self.dim}"
            )
        return (point - self.input_shift) / self.input_scale


@dataclass(frozen=True)
class GpPosterior:
    """Conditioning state: kernel params, data, and the Cholesky factor of
    K + noise*I together with its solve against the normalized targets."""

    params: KernelParams
    data: Dataset
    chol_factor: np.ndarray
    weights: np.ndarray
    jitter: float = 0.0


def kernel_eval(a: np.ndarray, b: np.ndarray, params: KernelParams) -> float:
    """Covariance between two joint points (normalized units)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.shape[0] != params.dim or b.shape[0] != params.dim:
        raise ValueError(
            f"kernel inputs must have dimension {params.dim}, "
            f"got {a.shape[0]} and {b.shape[0]}"
        )
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("kernel inputs must be finite")
    z = (a - b) / params.lengthscales
    return params.bias_variance + params.rbf_variance * math.exp(-0.5 * float(z @ z))


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, params: KernelParams) -> np.ndarray:
    sq = _scaled_sqdist(xa, xb, params.lengthscales)
    return params.bias_variance + params.rbf_variance * np.exp(-0.5 * sq)


def _scaled_sqdist(xa: np.ndarray, xb: np.ndarray, ls: np.ndarray) -> np.ndarray:
    a = xa / ls
    b = xb / ls
    return np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)


def gp_condition(data: Dataset, params: KernelParams) -> GpPosterior:
    """Factorize K + noise*I on the normalized data.

    The diagonal jitter escalates from 1e-10 by decades up to 1e-4 before
    giving up; an empty dataset yields a posterior that reproduces the
    prior everywhere.
    """
    if params.dim != data.dim:
        raise ValueError(
            f"kernel dimension {params.dim} does not match data dimension {data.dim}"
        )
    xn = data.normalized_inputs()
    yn = data.normalized_targets()
    n = data.size
    if n == 0:
        return GpPosterior(
            params=params,
            data=data,
            chol_factor=np.zeros((0, 0)),
            weights=np.zeros(0),
        )
    k = _kernel_matrix(xn, xn, params) + params.noise_variance * np.eye(n)
    last_err: Exception | None = None
    for jitter in _JITTERS:
        try:
            lo = cholesky(k + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError as err:
            last_err = err
            continue
        weights = cho_solve((lo, True), yn)
        return GpPosterior(
            params=params, data=data, chol_factor=lo, weights=weights, jitter=jitter
        )
    raise NonPositiveDefiniteError(
        f"covariance not positive definite even with jitter {_JITTERS[-1]:g}"
    ) from last_err


def gp_predict(post: GpPosterior, point: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at one joint point, in original units."""
    zn = post.data.normalize_point(point)
    prior_var = post.params.bias_variance + post.params.rbf_variance
    if post.data.size == 0:
        mean_n, var_n = 0.0, prior_var
    else:
        ks = _kernel_matrix(zn[None, :], post.data.normalized_inputs(), post.params)[0]
        mean_n = float(ks @ post.weights)
        v = solve_triangular(post.chol_factor, ks, lower=True)
        var_n = prior_var - float(v @ v)
    if var_n < 0.0:
        if var_n < _VAR_CLAMP:
            raise FloatingPointError(
                f"predictive variance {var_n:g} below clamping threshold"
            )
        var_n = 0.0
    mean = post.data.target_shift + post.data.target_scale * mean_n
    var = post.data.target_scale**2 * var_n
    return mean, var


# ---------------------------------------------------------------------------
# Marginal likelihood and hyperparameter fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperBounds:
    """Log-space box for (rbf_variance, lengthscales, bias_variance,
    noise_variance) during fitting."""

    rbf_variance: tuple[float, float] = (1e-3, 1e2)
    lengthscale: tuple[float, float] = (3e-2, 1e1)
    bias_variance: tuple[float, float] = (1e-6, 1e2)
    noise_variance: tuple[float, float] = (1e-8, 1.0)

    def log_bounds(self, dim: int) -> list[tuple[float, float]]:
        rows = [self.rbf_variance]
        rows += [self.lengthscale] * dim
        rows += [self.bias_variance, self.noise_variance]
        return [(math.log(lo), math.log(hi)) for lo, hi in rows]


def _pack(params: KernelParams) -> np.ndarray:
    return np.log(
        np.concatenate(
            (
                [params.rbf_variance],
                params.lengthscales,
                [params.bias_variance, params.noise_variance],
            )
        )
    )


def _unpack(theta: np.ndarray, dim: int) -> KernelParams:
    vals = np.exp(theta)
    return KernelParams(
        rbf_variance=float(vals[0]),
        lengthscales=vals[1 : 1 + dim],
        bias_variance=float(vals[1 + dim]),
        noise_variance=float(vals[2 + dim]),
    )


def log_marginal_likelihood(
    data: Dataset, params: KernelParams, eval_gradient: bool = False
):
    """Log marginal likelihood of the normalized targets; the optional
    gradient is with respect to the log of every hyperparameter."""
    xn = data.normalized_inputs()
    yn = data.normalized_targets()
    n = data.size
    if n == 0:
        return (0.0, np.zeros(data.dim + 3)) if eval_gradient else 0.0
    sq = _scaled_sqdist(xn, xn, params.lengthscales)
    rbf_part = params.rbf_variance * np.exp(-0.5 * sq)
    k = rbf_part + params.bias_variance + params.noise_variance * np.eye(n)
    try:
        lo = cholesky(k + 1e-12 * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        if eval_gradient:
            return -np.inf, np.zeros(params.dim + 3)
        return -np.inf
    alpha = cho_solve((lo, True), yn)
    lml = (
        -0.5 * float(yn @ alpha)
        - float(np.sum(np.log(np.diag(lo))))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    if not eval_gradient:
        return lml
    # d(lml)/d(theta_j) = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_j),
    # with theta in log space so dK/d(log p) = p * dK/dp.
    kinv = cho_solve((lo, True), np.eye(n))
    outer = np.outer(alpha, alpha) - kinv
    grads = np.empty(params.dim + 3)
    grads[0] = 0.5 * float(np.sum(outer * rbf_part))
    xs = xn / params.lengthscales
    for j in range(params.dim):
        dj = (xs[:, None, j] - xs[None, :, j]) ** 2
        grads[1 + j] = 0.5 * float(np.sum(outer * (rbf_part * dj)))
    grads[1 + params.dim] = 0.5 * params.bias_variance * float(np.sum(outer))
    grads[2 + params.dim] = 0.5 * params.noise_variance * float(np.trace(outer))
    return lml, grads


def fit_hyperparameters(
    data: Dataset,
    bounds: HyperBounds | None = None,
    restarts: int = 4,
    seed: int = 0,
) -> KernelParams:
    """Maximize the log marginal likelihood with multistart L-BFGS-B.

    The first start is a fixed default; the remaining ``restarts - 1`` are
    log-uniform draws from the bounds box, seeded, so the winner is
    deterministic for a given seed.
    """
    if data.size < 2:
        raise InsufficientDataError(
            f"hyperparameter fitting needs >= 2 observations, got {data.size}"
        )
    bounds = bounds or HyperBounds()
    dim = data.dim
    log_box = np.asarray(bounds.log_bounds(dim))

    def objective(theta: np.ndarray):
        lml, grad = log_marginal_likelihood(data, _unpack(theta, dim), eval_gradient=True)
        return -lml, -grad

    theta0 = np.clip(_pack(default_params(dim)), log_box[:, 0], log_box[:, 1])
    rng = np.random.default_rng(seed)
    starts = [theta0]
    for _ in range(max(0, restarts - 1)):
        starts.append(rng.uniform(log_box[:, 0], log_box[:, 1]))

    best_theta, best_val = None, np.inf
    for start in starts:
        res = optimize.minimize(
            objective, start, jac=True, method="L-BFGS-B", bounds=log_box
        )
        if res.fun < best_val:
            best_val = float(res.fun)
            best_theta = res.x
    if best_theta is None:
        raise RuntimeError("hyperparameter optimization failed from every start")
    return _unpack(best_theta, dim)


def should_refit(n_observations: int, dense_until: int = 50, thereafter_every: int = 5) -> bool:
    """Refit policy: every observation early on, then periodically (fit cost
    grows cubically while late-stage data changes the optimum little)."""
    if n_observations < 2:
        return False
    if n_observations <= dense_until:
        return True
    return n_observations % thereafter_every == 0
