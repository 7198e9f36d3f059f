"""Decentralized PI constraint controllers, SIMC tuning, and min/max
selector blocks for the overconstrained case (more constraints than
manipulated variables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class UncontrollablePairingError(ValueError):
    """Plant gain is zero: the chosen pairing cannot move the constraint."""


@dataclass
class PiLoop:
    """One constraint controller: pairing, PI gains, and saturation limits.

    ``kc`` is a positive gain magnitude; ``direction`` carries the sign of
    the plant gain so the loop always applies negative feedback.  The loop
    is a single-owner state machine: step it once per sample, never share a
    live instance across threads.
    """

    controlled_var: str
    manipulated_var: str
    kc: float
    tau_i: float
    setpoint: float
    u_min: float
    u_max: float
    direction: float = 1.0
    u_bias: float = 0.0
    integral_state: float = 0.0
    last_output: float = field(default=math.nan)
    fault: bool = False

    def __post_init__(self) -> None:
        if self.tau_i <= 0.0:
            raise ValueError("integral time must be positive")
        if not self.u_min < self.u_max:
            raise ValueError("saturation bounds must satisfy u_min < u_max")
        if math.isnan(self.last_output):
            self.last_output = min(self.u_max, max(self.u_min, self.u_bias))


def pi_step(loop: PiLoop, measurement: float, dt: float) -> float:
    """Advance one PI sample and return the saturated controller output.

    Anti-windup is conditional integration: the integral state advances by
    e*dt only when the raw output is not saturated against the error
    direction.  A non-finite measurement holds the previous output and sets
    the loop's fault flag.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not math.isfinite(measurement):
        loop.fault = True
        return loop.last_output
    e = loop.direction * (loop.setpoint - measurement)
    u_raw = loop.u_bias + loop.kc * e + (loop.kc / loop.tau_i) * loop.integral_state
    u = min(loop.u_max, max(loop.u_min, u_raw))
    pushing_past_high = u_raw > loop.u_max and e > 0.0
    pushing_past_low = u_raw < loop.u_min and e < 0.0
    if not (pushing_past_high or pushing_past_low):
        loop.integral_state += e * dt
    loop.last_output = u
    return u


def simc_tune(
    plant_gain: float, time_constant: float, delay: float, closed_loop_tc: float
) -> tuple[float, float]:
    """PI gains for a first-order-plus-delay process model.

    Returns (kc, tau_i) with kc = tau1 / (k * (tau_c + theta)) and
    tau_i = min(tau1, 4 * (tau_c + theta)).  kc keeps the sign of the plant
    gain; callers wanting a (magnitude, direction) split take abs/sign.
    """
    if plant_gain == 0.0:
        raise UncontrollablePairingError("plant gain is zero for this pairing")
    if time_constant <= 0.0:
        raise ValueError("time constant must be positive")
    if delay < 0.0:
        raise ValueError("delay must be non-negative")
    if closed_loop_tc <= 0.0:
        raise ValueError("closed-loop time constant must be positive")
    kc = time_constant / (plant_gain * (closed_loop_tc + delay))
    tau_i = min(time_constant, 4.0 * (closed_loop_tc + delay))
    return kc, tau_i


@dataclass
class SelectorBlock:
    """Min/max arbitration between controllers contending for one MV."""

    mode: str
    loops: list[PiLoop]

    def __post_init__(self) -> None:
        if self.mode not in ("min", "max"):
            raise ValueError(f"selector mode must be 'min' or 'max', got {self.mode!r}")


def selector_fold(mode: str, inputs: list[float]) -> float:
    """Plain fold of min or max over candidate MV values."""
    if not inputs:
        raise ValueError("selector needs at least one input")
    return min(inputs) if mode == "min" else max(inputs)


def selector_step(block: SelectorBlock, measurements: list[float], dt: float) -> float:
    """Step every member loop, pick the min/max candidate, and send the
    non-selected loops a tracking back-signal so they can take over
    bumplessly (their integral states are back-calculated to reproduce the
    selected output)."""
    if not block.loops:
        raise ValueError("selector needs at least one input")
    if len(measurements) != len(block.loops):
        raise ValueError("one measurement per member loop required")
    candidates = [pi_step(lp, m, dt) for lp, m in zip(block.loops, measurements)]
    u = selector_fold(block.mode, candidates)
    selected = candidates.index(u)
    for i, (lp, m) in enumerate(zip(block.loops, measurements)):
        if i == selected:
            continue
        e = lp.direction * (lp.setpoint - m)
        lp.integral_state = (u - lp.u_bias - lp.kc * e) * lp.tau_i / lp.kc
        lp.last_output = u
    return u
