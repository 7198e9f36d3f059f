"""Closed-loop scenario runner: every second the disturbance schedule is
applied, the constraint loops act, the reactor integrates, and the
steady-state gate decides whether the optimization layer gets a new
observation and emits new setpoints.  Also: trajectory/metrics export and
the offline step-test tuning procedure.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .acquisition import AcquisitionConfig, Box
from .orchestrator import DecisionVector, Eccbo, EccboConfig, RtoMetrics
from .plant_wo import (
    SPECIES,
    WoInputs,
    WoState,
    integrate_step,
    measure,
    wo_steady_state,
    wo_true_optimum,
)
from .regulatory import PiLoop, pi_step, simc_tune
from .scenario import Scenario
from .ssd import SsdState, SteadyGate


@dataclass
class BoEvent:
    """One gated steady-state sample and the decision taken on it."""

    time_s: float
    context: float
    decision: tuple[float, ...]
    next_decision: tuple[float, ...]
    profit: float
    cost_y: float
    g_values: tuple[float, float]
    regret: float | None = None


@dataclass
class TrajectoryLog:
    columns: list[str]
    rows: np.ndarray
    events: list[BoEvent]
    metrics: RtoMetrics
    oracle_refs: dict[float, tuple[float, float, float]] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def _log_columns(sc: Scenario) -> list[str]:
    return (
        ["time_s", "f_a", "f_b", "t_r"]
        + list(SPECIES)
        + [f"sp_{lc.controlled_var}" for lc in sc.loops]
        + ["steady", "bo_event", "cost"]
    )


def run_closed_loop(
    sc: Scenario, seed_override: int | None = None, progress: bool = False
) -> TrajectoryLog:
    """Simulate the scenario at 1 s sampling; deterministic for a fixed seed."""
    sc.validate()
    seed = sc.bo.seed if seed_override is None else seed_override
    rng = np.random.default_rng(seed)
    noise = sc.plant.cost_noise_std

    state = WoState(**sc.plant.initial_state, holdup_w=sc.plant.holdup_kg)
    mv = dict(sc.plant.initial_inputs)
    schedule = sc.schedule
    sched_i = 0
    f_a = schedule[0].f_a

    loops = [
        PiLoop(
            controlled_var=lc.controlled_var,
            manipulated_var=lc.manipulated_var,
            kc=lc.kc,
            tau_i=lc.tau_i,
            setpoint=0.0,
            u_min=lc.u_min,
            u_max=lc.u_max,
            direction=lc.direction,
            u_bias=mv[lc.manipulated_var],
        )
        for lc in sc.loops
    ]

    box = Box(
        np.array([lc.setpoint_min for lc in sc.loops]),
        np.array([lc.setpoint_max for lc in sc.loops]),
    )
    ctx_box = Box(np.array([sc.bo.context_min]), np.array([sc.bo.context_max]))
    orch = Eccbo(
        EccboConfig(
            box=box,
            context_box=ctx_box,
            n_setpoints=len(loops),
            acquisition=AcquisitionConfig(
                beta=sc.bo.beta, multistart_count=sc.bo.multistart_count, seed=seed
            ),
            init_count=sc.bo.init_count,
            seed=seed,
            mean_shift=sc.bo.mean_shift,
            hyper_restarts=sc.bo.hyper_restarts,
        )
    )
    gate = SteadyGate(
        [
            SsdState(
                lambda1=sc.ssd.lambda1,
                lambda2=sc.ssd.lambda2,
                lambda3=sc.ssd.lambda3,
                r_crit=sc.ssd.r_crit,
                eps=sc.ssd.eps,
                warmup=sc.ssd.warmup_samples,
            )
            for _ in range(3)
        ],
        hold=sc.ssd.hold_samples,
    )

    decision = orch.step(np.array([f_a]))
    sp_target = np.array(decision.setpoints)
    sp_current = sp_target.copy()
    ramp_step = np.zeros_like(sp_target)
    ramp_left = 0

    oracle_refs: dict[float, tuple[float, float, float]] = {}
    events: list[BoEvent] = []
    n = int(sc.duration_s)
    columns = _log_columns(sc)
    rows = np.empty((n, len(columns)))
    last_record = -math.inf

    for k in range(n):
        t = float(k)
        while sched_i + 1 < len(schedule) and t >= schedule[sched_i + 1].time_s:
            sched_i += 1
            f_a = schedule[sched_i].f_a
            gate.rearm()

        if ramp_left > 0:
            sp_current = sp_current + ramp_step
            ramp_left -= 1
            if ramp_left == 0:
                sp_current = sp_target.copy()

        for loop, sp in zip(loops, sp_current):
            loop.setpoint = float(sp)
            meas = getattr(state, loop.controlled_var)
            mv[loop.manipulated_var] = pi_step(loop, meas, 1.0)

        inputs = WoInputs(f_a, mv["f_b"], mv["t_r"])
        state = integrate_step(state, inputs, 1.0)
        m = measure(state, inputs)
        cost_meas = m.cost_j if noise == 0.0 else m.cost_j + rng.normal(0.0, noise)

        steady = gate.update(
            [
                cost_meas / sc.ssd.cost_scale,
                m.g_values[0] / sc.ssd.cv_scale,
                m.g_values[1] / sc.ssd.cv_scale,
            ]
        )
        bo_event = False
        now = t + 1.0
        if steady and ramp_left == 0 and now - last_record >= sc.bo.min_update_interval_s:
            y = -cost_meas
            orch.record_observation(decision, np.array([f_a]), y, timestamp=now)
            orch.metrics.violation_update(m.g_values)
            regret = None
            if sc.bo.compute_regret:
                if f_a not in oracle_refs:
                    oracle_refs[f_a] = wo_true_optimum(
                        f_a,
                        grid_resolution=sc.bo.oracle_grid,
                        z_g_box=(sc.loops[0].setpoint_min, sc.loops[0].setpoint_max),
                        z_a_box=(sc.loops[1].setpoint_min, sc.loops[1].setpoint_max),
                        holdup_w=sc.plant.holdup_kg,
                    )
                f_star = -oracle_refs[f_a][2]
                orch.metrics.regret_update(y, f_star)
                regret = y - f_star
            prev = decision
            decision = orch.step(np.array([f_a]))
            events.append(
                BoEvent(
                    time_s=now,
                    context=f_a,
                    decision=prev.setpoints,
                    next_decision=decision.setpoints,
                    profit=cost_meas,
                    cost_y=y,
                    g_values=m.g_values,
                    regret=regret,
                )
            )
            new_target = np.array(decision.setpoints)
            ramp_n = max(1, int(sc.bo.setpoint_ramp_s))
            ramp_step = (new_target - sp_current) / ramp_n
            sp_target = new_target
            ramp_left = ramp_n
            last_record = now
            gate.rearm()
            bo_event = True
            if progress:
                print(
                    f"t={now:8.0f}s  f_a={f_a:.2f}  profit={cost_meas:8.3f}  "
                    f"next setpoints={decision.setpoints}"
                )

        rows[k, 0] = now
        rows[k, 1] = f_a
        rows[k, 2] = mv["f_b"]
        rows[k, 3] = mv["t_r"]
        rows[k, 4:10] = state.fractions()
        rows[k, 10 : 10 + len(loops)] = sp_current
        rows[k, 10 + len(loops)] = 1.0 if steady else 0.0
        rows[k, 11 + len(loops)] = 1.0 if bo_event else 0.0
        rows[k, 12 + len(loops)] = cost_meas

    return TrajectoryLog(
        columns=columns,
        rows=rows,
        events=events,
        metrics=orch.metrics,
        oracle_refs=oracle_refs,
    )


def export_csv(log: TrajectoryLog, path: str) -> None:
    """Write the per-second trajectory (RFC-4180 quoting via the stdlib
    writer) plus a JSON metrics sidecar next to it."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(log.columns)
        for row in log.rows:
            writer.writerow([repr(v) for v in row])


def export_metrics(log: TrajectoryLog, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    payload = {
        "n_samples": log.n_samples,
        "n_observations": len(log.events),
        "cumulative_violation": log.metrics.cumulative_violation,
        "cumulative_regret": log.metrics.cumulative_regret if log.events else 0.0,
        "oracle_refs": {
            repr(fa): {"z_g": z[0], "z_a": z[1], "profit": z[2]}
            for fa, z in sorted(log.oracle_refs.items())
        },
        "events": [
            {
                "time_s": e.time_s,
                "context": e.context,
                "decision": list(e.decision),
                "next_decision": list(e.next_decision),
                "profit": e.profit,
                "g_values": list(e.g_values),
                "regret": e.regret,
            }
            for e in log.events
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def read_csv(path: str) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return header, data.reshape(-1, len(header))


# ---------------------------------------------------------------------------
# Offline step-test tuning
# ---------------------------------------------------------------------------


@dataclass
class TuneResult:
    controlled_var: str
    manipulated_var: str
    plant_gain: float
    time_constant: float
    delay: float
    kc: float
    tau_i: float
    direction: float


def tune_loops(sc: Scenario, tau_c_factor: float = 4.0) -> list[TuneResult]:
    """Scripted open-loop step tests at the scenario's initial operating
    point, one per configured loop, mapped to PI gains via the SIMC rules
    with tau_c = tau1 / tau_c_factor."""
    f_a = sc.schedule[0].f_a
    mv0 = dict(sc.plant.initial_inputs)
    base = wo_steady_state(f_a, mv0["f_b"], mv0["t_r"], holdup_w=sc.plant.holdup_kg)
    results = []
    for lc in sc.loops:
        d_u = 2.0 if lc.manipulated_var == "t_r" else 0.1 * mv0[lc.manipulated_var]
        stepped = dict(mv0)
        stepped[lc.manipulated_var] += d_u
        inputs = WoInputs(f_a, stepped["f_b"], stepped["t_r"])
        y0 = getattr(base, lc.controlled_var)
        ts, ys = [], []
        state = base
        for k in range(6000):
            state = integrate_step(state, inputs, 1.0)
            ts.append(k + 1.0)
            ys.append(getattr(state, lc.controlled_var))
            if k > 100 and abs(ys[-1] - ys[-50]) < 1e-10:
                break
        ys = np.array(ys)
        ts = np.array(ts)
        dy = ys[-1] - y0
        k_gain = dy / d_u
        i2 = int(np.argmax(np.abs(ys - y0) >= 0.02 * abs(dy)))
        i63 = int(np.argmax(np.abs(ys - y0) >= 0.632 * abs(dy)))
        theta = ts[i2]
        tau1 = max(ts[i63] - theta, 1.0)
        kc, tau_i = simc_tune(k_gain, tau1, theta, tau1 / tau_c_factor)
        results.append(
            TuneResult(
                controlled_var=lc.controlled_var,
                manipulated_var=lc.manipulated_var,
                plant_gain=float(k_gain),
                time_constant=float(tau1),
                delay=float(theta),
                kc=abs(kc),
                tau_i=float(tau_i),
                direction=math.copysign(1.0, kc),
            )
        )
    return results
