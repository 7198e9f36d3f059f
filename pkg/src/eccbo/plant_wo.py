"""Dynamic Williams-Otto CSTR: kinetics, mass balances, fixed-step RK4
integration, profit/constraint measurement, and a brute-force steady-state
optimum oracle used to benchmark the optimization layer.

The reactor converts feeds A and B into products P and E through three
series-parallel reactions (A+B -> C, B+C -> P+E, C+P -> G).  States are
mass fractions in a constant-holdup perfectly mixed tank; the reactor
temperature is treated as a directly settable input (no energy balance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

# Arrhenius laws for the three reactions: k_i = A_i * exp(-B_i / T_r).
ARRHENIUS = (
    (1.6599e6, 6666.7),
    (7.2177e8, 8333.3),
    (2.6745e12, 11111.0),
)

# Mass-basis stoichiometric coefficients, one column per reaction, rows in
# species order (A, B, C, E, G, P).  Each column sums to zero, so the total
# mass balance closes identically.
STOICH = np.array(
    [
        [-1.0, 0.0, 0.0],
        [-1.0, -1.0, 0.0],
        [2.0, -2.0, -1.0],
        [0.0, 2.0, 0.0],
        [0.0, 0.0, 1.5],
        [0.0, 1.0, -0.5],
    ]
)

SPECIES = ("x_a", "x_b", "x_c", "x_e", "x_g", "x_p")

# Profit coefficients, $/kg of product stream and $/kg of feed.
PRICE_P = 1043.38
PRICE_E = 20.92
COST_FA = 79.23
COST_FB = 118.34

# Constraint limits in positive-null form: g1 = 0.08 - x_g, g2 = 0.12 - x_a.
X_G_LIMIT = 0.08
X_A_LIMIT = 0.12

# Physical guard bracket for the reactor temperature input, K.
TR_MIN = 320.0
TR_MAX = 420.0

DEFAULT_HOLDUP_KG = 2105.0

_MAX_SUBSTEP_S = 0.25
_RENORM_DRIFT = 1e-12
_STEADY_TOL = 1e-10
_STEADY_CAP_S = 1e6


class IntegrationBlowupError(RuntimeError):
    """State became non-finite during integration."""


class SteadyStateError(RuntimeError):
    """Steady-state iteration failed to converge within the simulated-time cap."""


class InfeasibleOracleError(RuntimeError):
    """No feasible steady state found anywhere on the oracle grid."""


@dataclass
class WoState:
    """Reactor composition (mass fractions, kg/kg) and holdup (kg)."""

    x_a: float
    x_b: float
    x_c: float
    x_e: float
    x_g: float
    x_p: float
    holdup_w: float = DEFAULT_HOLDUP_KG

    def fractions(self) -> tuple[float, ...]:
        return (self.x_a, self.x_b, self.x_c, self.x_e, self.x_g, self.x_p)

    def validate(self) -> None:
        fr = self.fractions()
        if not all(math.isfinite(v) for v in fr) or not math.isfinite(self.holdup_w):
            raise ValueError("non-finite reactor state")
        if any(v < -1e-12 or v > 1.0 + 1e-12 for v in fr):
            raise ValueError(f"mass fraction outside [0, 1]: {fr}")
        if abs(sum(fr) - 1.0) > 1e-8:
            raise ValueError(f"mass fractions sum to {sum(fr)!r}, expected 1")
        if self.holdup_w <= 0.0:
            raise ValueError("holdup must be positive")


@dataclass
class WoInputs:
    """Manipulated and disturbance inputs: feed rates (kg/s) and temperature (K)."""

    f_a: float
    f_b: float
    t_r: float

    def validate(self) -> None:
        if not (self.f_a > 0.0 and self.f_b > 0.0):
            raise ValueError("feed rates must be positive")
        if not (TR_MIN <= self.t_r <= TR_MAX):
            raise ValueError(
                f"reactor temperature {self.t_r} outside guard bracket "
                f"[{TR_MIN}, {TR_MAX}] K"
            )


@dataclass
class PlantMeasurement:
    """One sample of what the optimization layers can see."""

    cost_j: float
    g_values: tuple[float, float]
    raw_outputs: tuple[float, ...]


def reference_initial_state(holdup_w: float = DEFAULT_HOLDUP_KG) -> WoState:
    """Feed-composition start: pure A/B mixture, no products."""
    return WoState(0.6, 0.4, 0.0, 0.0, 0.0, 0.0, holdup_w)


def wo_rates(state: WoState, t_r: float) -> tuple[float, float, float, float, float, float]:
    """Arrhenius constants and mass-basis reaction rates (kg/s) at ``t_r``."""
    k1 = ARRHENIUS[0][0] * math.exp(-ARRHENIUS[0][1] / t_r)
    k2 = ARRHENIUS[1][0] * math.exp(-ARRHENIUS[1][1] / t_r)
    k3 = ARRHENIUS[2][0] * math.exp(-ARRHENIUS[2][1] / t_r)
    w = state.holdup_w
    r1 = k1 * state.x_a * state.x_b * w
    r2 = k2 * state.x_b * state.x_c * w
    r3 = k3 * state.x_c * state.x_p * w
    return k1, k2, k3, r1, r2, r3


def wo_derivatives(state: WoState, inputs: WoInputs) -> tuple[float, ...]:
    """Time derivatives of the six mass fractions, 1/s."""
    return _rhs(state.fractions(), inputs.f_a, inputs.f_b, inputs.t_r, state.holdup_w)


def _rhs(
    x: tuple[float, ...], f_a: float, f_b: float, t_r: float, w: float
) -> tuple[float, ...]:
    # Plain-float hot path: called four times per RK4 substep.
    x_a, x_b, x_c, x_e, x_g, x_p = x
    k1 = 1.6599e6 * math.exp(-6666.7 / t_r)
    k2 = 7.2177e8 * math.exp(-8333.3 / t_r)
    k3 = 2.6745e12 * math.exp(-11111.0 / t_r)
    r1 = k1 * x_a * x_b * w
    r2 = k2 * x_b * x_c * w
    r3 = k3 * x_c * x_p * w
    f = f_a + f_b
    return (
        (f_a - f * x_a - r1) / w,
        (f_b - f * x_b - r1 - r2) / w,
        (-f * x_c + 2.0 * r1 - 2.0 * r2 - r3) / w,
        (-f * x_e + 2.0 * r2) / w,
        (-f * x_g + 1.5 * r3) / w,
        (-f * x_p + r2 - 0.5 * r3) / w,
    )


def integrate_step(state: WoState, inputs: WoInputs, dt: float) -> WoState:
    """Advance the reactor by ``dt`` seconds of classical RK4.

    Internal substeps never exceed 0.25 s.  Mass fractions are re-clamped to
    [0, 1] and renormalized whenever the sum drifts by more than 1e-12.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n_sub = max(1, math.ceil(dt / _MAX_SUBSTEP_S))
    h = dt / n_sub
    x = state.fractions()
    f_a, f_b, t_r, w = inputs.f_a, inputs.f_b, inputs.t_r, state.holdup_w
    for _ in range(n_sub):
        k1 = _rhs(x, f_a, f_b, t_r, w)
        x2 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k1))
        k2 = _rhs(x2, f_a, f_b, t_r, w)
        x3 = tuple(xi + 0.5 * h * ki for xi, ki in zip(x, k2))
        k3 = _rhs(x3, f_a, f_b, t_r, w)
        x4 = tuple(xi + h * ki for xi, ki in zip(x, k3))
        k4 = _rhs(x4, f_a, f_b, t_r, w)
        x = tuple(
            xi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
        )
        s = sum(x)
        if abs(s - 1.0) > _RENORM_DRIFT:
            x = tuple(min(1.0, max(0.0, xi)) for xi in x)
            x = tuple(xi / sum(x) for xi in x)
    if not all(math.isfinite(xi) for xi in x):
        raise IntegrationBlowupError(
            f"non-finite state after integration at inputs {inputs}"
        )
    return WoState(*x, holdup_w=w)


def wo_cost(state: WoState, inputs: WoInputs) -> float:
    """Instantaneous profit rate, $/s (positive = earning)."""
    f = inputs.f_a + inputs.f_b
    return (
        PRICE_P * state.x_p * f
        + PRICE_E * state.x_e * f
        - COST_FA * inputs.f_a
        - COST_FB * inputs.f_b
    )


def measure(state: WoState, inputs: WoInputs) -> PlantMeasurement:
    """Cost and constraint slacks in positive-null form (feasible iff >= 0)."""
    return PlantMeasurement(
        cost_j=wo_cost(state, inputs),
        g_values=(X_G_LIMIT - state.x_g, X_A_LIMIT - state.x_a),
        raw_outputs=state.fractions(),
    )


def _steady_residual(x: np.ndarray, f_a: float, f_b: float, t_r: float, w: float) -> np.ndarray:
    return np.asarray(_rhs(tuple(x), f_a, f_b, t_r, w))


def wo_steady_state(
    f_a: float,
    f_b: float,
    t_r: float,
    holdup_w: float = DEFAULT_HOLDUP_KG,
    initial: WoState | None = None,
) -> WoState:
    """Steady state reached from the reference initial composition.

    Integrates forward (Newton-accelerated once the trajectory is close) until
    the derivative infinity-norm falls below 1e-10; simulated time is capped
    at 1e6 s.  Deterministic for fixed arguments.
    """
    inputs = WoInputs(f_a, f_b, t_r)
    inputs.validate()
    state = initial if initial is not None else reference_initial_state(holdup_w)
    elapsed = 0.0
    chunk = 500.0
    while elapsed < _STEADY_CAP_S:
        state = integrate_step(state, inputs, chunk)
        elapsed += chunk
        chunk = min(chunk * 2.0, 16000.0)
        if _deriv_inf_norm(state, inputs) < 1e-6:
            sol = optimize.root(
                _steady_residual,
                np.array(state.fractions()),
                args=(f_a, f_b, t_r, holdup_w),
                method="hybr",
                tol=1e-13,
            )
            if sol.success:
                x = sol.x
                cand = WoState(*x, holdup_w=holdup_w)
                drift = float(np.max(np.abs(x - np.array(state.fractions()))))
                if (
                    drift < 0.05
                    and np.all(x > -1e-12)
                    and np.all(x < 1.0 + 1e-12)
                    and _deriv_inf_norm(cand, inputs) < _STEADY_TOL
                ):
                    return cand
        if _deriv_inf_norm(state, inputs) < _STEADY_TOL:
            return state
    raise SteadyStateError(
        f"no steady state within {_STEADY_CAP_S:.0f} s at "
        f"(f_a={f_a}, f_b={f_b}, t_r={t_r})"
    )


def _deriv_inf_norm(state: WoState, inputs: WoInputs) -> float:
    return max(abs(d) for d in wo_derivatives(state, inputs))


# ---------------------------------------------------------------------------
# Constraint-closure map and brute-force optimum oracle
# ---------------------------------------------------------------------------


@dataclass
class ClosedSteadyState:
    """Steady state with both constraint measurements pinned to setpoints."""

    state: WoState
    inputs: WoInputs
    profit: float


def _closure_residual(
    v: np.ndarray, z_g: float, z_a: float, f_a: float, w: float
) -> np.ndarray:
    # Unknowns: x_b, x_c, x_e, x_p, f_b, t_r with x_a = z_a and x_g = z_g pinned.
    x_b, x_c, x_e, x_p, f_b, t_r = v
    x = (z_a, x_b, x_c, x_e, z_g, x_p)
    return np.asarray(_rhs(x, f_a, f_b, t_r, w))


def solve_constrained_steady_state(
    z_g: float,
    z_a: float,
    f_a: float,
    holdup_w: float = DEFAULT_HOLDUP_KG,
    guess: np.ndarray | None = None,
) -> ClosedSteadyState | None:
    """Steady state with x_g = z_g and x_a = z_a held exactly.

    Solves the six species balances for the free compositions plus the two
    manipulated inputs.  Returns None when no physical solution exists inside
    the input brackets (the setpoint pair is unreachable).
    """
    if guess is None:
        guess = _closure_bootstrap(z_g, z_a, f_a, holdup_w)
        if guess is None:
            return None
    sol = optimize.root(
        _closure_residual, guess, args=(z_g, z_a, f_a, holdup_w), method="hybr", tol=1e-13
    )
    if not sol.success:
        return None
    x_b, x_c, x_e, x_p, f_b, t_r = sol.x
    fracs = np.array([z_a, x_b, x_c, x_e, z_g, x_p])
    if np.any(fracs < -1e-10) or np.any(fracs > 1.0 + 1e-10):
        return None
    if not (f_b > 0.0 and TR_MIN <= t_r <= TR_MAX):
        return None
    state = WoState(z_a, x_b, x_c, x_e, z_g, x_p, holdup_w)
    inputs = WoInputs(f_a, f_b, t_r)
    if _deriv_inf_norm(state, inputs) > 1e-9:
        return None
    return ClosedSteadyState(state=state, inputs=inputs, profit=wo_cost(state, inputs))


def _closure_bootstrap(
    z_g: float, z_a: float, f_a: float, holdup_w: float
) -> np.ndarray | None:
    """Initial guess for the closure solve: one open-loop steady state at
    nominal inputs, then Newton continuation of the pinned constraint values
    toward the requested setpoints."""
    f_b0, t_r0 = 2.5 * f_a, 360.0
    st = wo_steady_state(f_a, f_b0, t_r0, holdup_w)
    guess = np.array([st.x_b, st.x_c, st.x_e, st.x_p, f_b0, t_r0])
    n_steps = 8
    for i in range(1, n_steps + 1):
        s = i / n_steps
        zg_s = st.x_g + s * (z_g - st.x_g)
        za_s = st.x_a + s * (z_a - st.x_a)
        sol = optimize.root(
            _closure_residual, guess, args=(zg_s, za_s, f_a, holdup_w), method="hybr", tol=1e-13
        )
        if not sol.success:
            return None
        guess = sol.x
    return guess


def wo_true_optimum(
    f_a: float,
    grid_resolution: int = 101,
    z_g_box: tuple[float, float] = (0.07, X_G_LIMIT),
    z_a_box: tuple[float, float] = (0.07, X_A_LIMIT),
    holdup_w: float = DEFAULT_HOLDUP_KG,
) -> tuple[float, float, float]:
    """Best feasible steady-state profit over the setpoint box for context ``f_a``.

    Brute-force grid over (z_g, z_a), each point resolved by pinning both
    constraint measurements at their setpoints, followed by one local polish
    pass.  Returns (z_g*, z_a*, profit*).
    """
    if grid_resolution < 51:
        raise ValueError("grid_resolution must be at least 51 per axis")
    z_g_grid = np.linspace(z_g_box[0], z_g_box[1], grid_resolution)
    z_a_grid = np.linspace(z_a_box[0], z_a_box[1], grid_resolution)

    guess = _closure_bootstrap(z_g_grid[0], z_a_grid[0], f_a, holdup_w)
    best_profit = -math.inf
    best_z = None
    best_sol = None
    row_guess = guess
    for z_a in z_a_grid:
        sol_prev = None
        for z_g in z_g_grid:
            g = sol_prev if sol_prev is not None else row_guess
            closed = solve_constrained_steady_state(z_g, float(z_a), f_a, holdup_w, guess=g)
            if closed is None:
                continue
            sol_prev = np.array(
                [
                    closed.state.x_b,
                    closed.state.x_c,
                    closed.state.x_e,
                    closed.state.x_p,
                    closed.inputs.f_b,
                    closed.inputs.t_r,
                ]
            )
            if z_g == z_g_grid[0]:
                row_guess = sol_prev
            if closed.profit > best_profit:
                best_profit = closed.profit
                best_z = (float(z_g), float(z_a))
                best_sol = sol_prev
    if best_z is None:
        raise InfeasibleOracleError(
            f"no reachable steady state anywhere on the setpoint grid for f_a={f_a}"
        )

    # Single polish pass: bounded local maximization from the best grid point.
    warm = {"guess": best_sol}

    def neg_profit(z: np.ndarray) -> float:
        closed = solve_constrained_steady_state(
            float(z[0]), float(z[1]), f_a, holdup_w, guess=warm["guess"]
        )
        if closed is None:
            return 1e6
        warm["guess"] = np.array(
            [
                closed.state.x_b,
                closed.state.x_c,
                closed.state.x_e,
                closed.state.x_p,
                closed.inputs.f_b,
                closed.inputs.t_r,
            ]
        )
        return -closed.profit

    res = optimize.minimize(
        neg_profit,
        np.array(best_z),
        method="L-BFGS-B",
        bounds=[z_g_box, z_a_box],
        options={"eps": 1e-7, "maxiter": 60},
    )
    if res.success and -res.fun > best_profit:
        return float(res.x[0]), float(res.x[1]), float(-res.fun)
    return best_z[0], best_z[1], best_profit
