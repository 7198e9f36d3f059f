"""Steady-state detection via the R statistic: a variance-ratio test built
from three exponential filters, gating every optimization update on settled
measurements."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass
class SsdState:
    """Filter state for one monitored signal.

    R compares a filtered squared deviation from the running mean against a
    filtered squared successive difference; R near 1 means the signal is
    only noise, large R means drift.  Steady is declared when R < r_crit
    after the warmup has elapsed.
    """

    lambda1: float = 0.2
    lambda2: float = 0.1
    lambda3: float = 0.1
    r_crit: float = 2.0
    eps: float = 1e-12
    warmup: int = 50

    filtered_mean: float = 0.0
    var_est1: float = 0.0
    var_est2: float = 0.0
    prev_sample: float = math.nan
    warmup_remaining: int = -1

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.r_crit <= 0.0:
            raise ValueError("r_crit must be positive")
        if self.warmup_remaining < 0:
            self.warmup_remaining = self.warmup

    def reset(self) -> None:
        self.filtered_mean = 0.0
        self.var_est1 = 0.0
        self.var_est2 = 0.0
        self.prev_sample = math.nan
        self.warmup_remaining = self.warmup


def ssd_update(state: SsdState, sample: float) -> tuple[float, bool]:
    """Feed one sample; returns (r_statistic, is_steady).

    The first sample only initializes the filters.  is_steady is never true
    before the warmup has elapsed.
    """
    if not math.isfinite(sample):
        raise ValueError("sample must be finite")
    if math.isnan(state.prev_sample):
        state.filtered_mean = sample
        state.prev_sample = sample
        state.warmup_remaining = max(0, state.warmup_remaining - 1)
        return 0.0, False
    prev_mean = state.filtered_mean
    state.var_est1 = (
        state.lambda2 * (sample - prev_mean) ** 2 + (1.0 - state.lambda2) * state.var_est1
    )
    state.filtered_mean = state.lambda1 * sample + (1.0 - state.lambda1) * prev_mean
    state.var_est2 = (
        state.lambda3 * (sample - state.prev_sample) ** 2
        + (1.0 - state.lambda3) * state.var_est2
    )
    state.prev_sample = sample
    r = (2.0 - state.lambda1) * state.var_est1 / max(state.var_est2, state.eps)
    if state.warmup_remaining > 0:
        state.warmup_remaining -= 1
        return r, False
    return r, r < state.r_crit


def ssd_multi(states: list[SsdState], samples: list[float]) -> bool:
    """Logical AND of per-signal steadiness for one sample vector."""
    if len(states) != len(samples):
        raise ValueError("one sample per detector required")
    flags = [ssd_update(st, s)[1] for st, s in zip(states, samples)]
    return all(flags)


class SteadyGate:
    """Multi-signal gate: all signals steady for a minimum consecutive hold.

    ``update`` returns True only once every detector reports steady and has
    done so for ``hold`` consecutive samples since the last ``rearm()``.
    Call ``rearm()`` after acting on a steady flag (or after any known
    process excitation) to require a fresh hold period.
    """

    def __init__(self, states: list[SsdState], hold: int = 60):
        if hold < 0:
            raise ValueError("hold must be non-negative")
        self.states = states
        self.hold = hold
        self._consecutive = 0

    def update(self, samples: list[float]) -> bool:
        if ssd_multi(self.states, samples):
            self._consecutive += 1
        else:
            self._consecutive = 0
        return self._consecutive >= self.hold

    def rearm(self) -> None:
        self._consecutive = 0
