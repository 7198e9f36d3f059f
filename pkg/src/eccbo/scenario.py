"""Scenario configuration: a YAML schema that fully determines a closed-loop
run (plant, constraint loops, steady-state detection, optimization layer,
disturbance schedule, output paths).  Everything has a documented default;
unknown keys are rejected so a file cannot silently misconfigure a run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import yaml


class ScenarioError(ValueError):
    """Malformed scenario: message names the offending field."""


@dataclass
class PlantConfig:
    holdup_kg: float = 2105.0
    initial_state: dict = field(
        default_factory=lambda: {
            "x_a": 0.6,
            "x_b": 0.4,
            "x_c": 0.0,
            "x_e": 0.0,
            "x_g": 0.0,
            "x_p": 0.0,
        }
    )
    initial_inputs: dict = field(default_factory=lambda: {"f_b": 2.7, "t_r": 348.0})
    cost_noise_std: float = 0.0


@dataclass
class LoopConfig:
    controlled_var: str
    manipulated_var: str
    kc: float
    tau_i: float
    direction: float
    u_min: float
    u_max: float
    setpoint_min: float
    setpoint_max: float


@dataclass
class SsdConfig:
    lambda1: float = 0.2
    lambda2: float = 0.1
    lambda3: float = 0.1
    r_crit: float = 2.0
    eps: float = 1e-12
    warmup_samples: int = 50
    hold_samples: int = 60
    # signals are divided by these before detection; with noise-free
    # measurements the eps floor then sets a per-signal resolution
    # (slope below ~sqrt(eps) * scale per sample counts as settled)
    cost_scale: float = 100.0
    cv_scale: float = 0.1


@dataclass
class BoConfig:
    beta: float = 4.0
    multistart_count: int = 8
    init_count: int = 3
    seed: int = 0
    context_min: float = 0.8
    context_max: float = 2.0
    mean_shift: float | None = None
    hyper_restarts: int = 4
    min_update_interval_s: float = 600.0
    setpoint_ramp_s: float = 60.0
    compute_regret: bool = True
    oracle_grid: int = 101


@dataclass
class SchedulePoint:
    time_s: float
    f_a: float


@dataclass
class OutputConfig:
    csv_path: str = "wo_run.csv"
    metrics_path: str = "wo_run_metrics.json"


# Loop gains below come from the shipped step-test procedure (`eccbo tune`)
# run at the default initial operating point with tau_c = tau1 / 4.
def default_loops() -> list[LoopConfig]:
    return [
        LoopConfig(
            controlled_var="x_g",
            manipulated_var="t_r",
            kc=929.0,
            tau_i=344.0,
            direction=1.0,
            u_min=320.0,
            u_max=420.0,
            setpoint_min=0.07,
            setpoint_max=0.08,
        ),
        LoopConfig(
            controlled_var="x_a",
            manipulated_var="f_b",
            kc=131.0,
            tau_i=528.0,
            direction=-1.0,
            u_min=0.3,
            u_max=10.0,
            setpoint_min=0.07,
            setpoint_max=0.12,
        ),
    ]


@dataclass
class Scenario:
    duration_s: float = 126000.0
    plant: PlantConfig = field(default_factory=PlantConfig)
    loops: list[LoopConfig] = field(default_factory=default_loops)
    ssd: SsdConfig = field(default_factory=SsdConfig)
    bo: BoConfig = field(default_factory=BoConfig)
    schedule: list[SchedulePoint] = field(
        default_factory=lambda: [
            SchedulePoint(0.0, 1.0),
            SchedulePoint(36000.0, 1.9),
            SchedulePoint(90000.0, 1.0),
        ]
    )
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> None:
        if self.duration_s < 0:
            raise ScenarioError("duration_s must be non-negative")
        if not self.loops:
            raise ScenarioError("loops must list at least one constraint controller")
        for i, lc in enumerate(self.loops):
            if not lc.setpoint_min <= lc.setpoint_max:
                raise ScenarioError(f"loops[{i}].setpoint_min exceeds setpoint_max")
            if not lc.u_min < lc.u_max:
                raise ScenarioError(f"loops[{i}].u_min must be below u_max")
            if lc.tau_i <= 0:
                raise ScenarioError(f"loops[{i}].tau_i must be positive")
            if lc.manipulated_var not in self.plant.initial_inputs:
                raise ScenarioError(
                    f"loops[{i}].manipulated_var {lc.manipulated_var!r} has no "
                    "initial value in plant.initial_inputs"
                )
        if not self.schedule:
            raise ScenarioError("schedule must contain at least one entry")
        if self.schedule[0].time_s != 0.0:
            raise ScenarioError("schedule[0].time_s must be 0")
        times = [p.time_s for p in self.schedule]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("schedule times must be strictly increasing")
        if self.duration_s > 0 and times[-1] >= self.duration_s:
            raise ScenarioError("schedule time_s beyond scenario duration_s")
        if any(p.f_a <= 0 for p in self.schedule):
            raise ScenarioError("schedule f_a values must be positive")
        if not self.bo.context_min < self.bo.context_max:
            raise ScenarioError("bo.context_min must be below bo.context_max")
        for p in self.schedule:
            if not self.bo.context_min <= p.f_a <= self.bo.context_max:
                raise ScenarioError(
                    f"schedule f_a={p.f_a} outside bo context box "
                    f"[{self.bo.context_min}, {self.bo.context_max}]"
                )
        if self.bo.init_count < 1:
            raise ScenarioError("bo.init_count must be at least 1")
        if self.bo.beta < 0:
            raise ScenarioError("bo.beta must be non-negative")
        if self.plant.cost_noise_std < 0:
            raise ScenarioError("plant.cost_noise_std must be non-negative")
        state_keys = set(self.plant.initial_state)
        if state_keys != {"x_a", "x_b", "x_c", "x_e", "x_g", "x_p"}:
            raise ScenarioError("plant.initial_state must name all six mass fractions")


_SECTION_TYPES = {
    "plant": PlantConfig,
    "ssd": SsdConfig,
    "bo": BoConfig,
    "output": OutputConfig,
}


def _build(cls, mapping, where):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where} must be a mapping")
    fields = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(mapping) - fields
    if unknown:
        raise ScenarioError(f"unknown field {where}.{sorted(unknown)[0]}")
    try:
        return cls(**mapping)
    except TypeError as err:
        raise ScenarioError(f"{where}: {err}") from err


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ScenarioError("scenario root must be a mapping")
    known = {"duration_s", "plant", "loops", "ssd", "bo", "schedule", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ScenarioError(f"unknown field {sorted(unknown)[0]}")
    sc = Scenario()
    if "duration_s" in raw:
        try:
            sc.duration_s = float(raw["duration_s"])
        except (TypeError, ValueError) as err:
            raise ScenarioError(f"duration_s: {err}") from err
    for key, cls in _SECTION_TYPES.items():
        if key in raw:
            setattr(sc, key, _build(cls, raw[key], key))
    if "loops" in raw:
        if not isinstance(raw["loops"], list):
            raise ScenarioError("loops must be a list")
        sc.loops = [_build(LoopConfig, lc, f"loops[{i}]") for i, lc in enumerate(raw["loops"])]
    if "schedule" in raw:
        if not isinstance(raw["schedule"], list):
            raise ScenarioError("schedule must be a list")
        sc.schedule = [
            _build(SchedulePoint, p, f"schedule[{i}]") for i, p in enumerate(raw["schedule"])
        ]
    sc.validate()
    return sc


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as err:
        raise ScenarioError(f"invalid YAML in {path}: {err}") from err
    return scenario_from_dict(raw if raw is not None else {})


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(asdict(sc), fh, sort_keys=False)
