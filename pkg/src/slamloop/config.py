"""Scenario configuration: JSON schema, validation, and defaults.

A scenario is one closed-loop run: plant, sensor profile, filter tuning,
controller gains, and a reference of type ``step_sequence``, ``helix`` or
``waypoints``. Unknown keys are rejected so typos fail loudly instead of
silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import PidGains
from .estimator import FilterConfig, R_FLOOR
from .pose_sources import ImuConfig, LoopClosureEvent, SensorProfile, builtin_profiles
from .reference import HelixSpec
from .vehicle import PlantParams


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass
class StepReferenceSpec:
    axis: int = 0
    amplitude: float = 1.0
    hold_time: float = 15.0
    repetitions: int = 2
    hover: tuple[float, float, float] = (0.0, 0.0, 2.0)

    type: str = field(default="step_sequence", init=False, repr=False)


@dataclass
class HelixReferenceSpec:
    spec: HelixSpec = field(default_factory=HelixSpec)

    type: str = field(default="helix", init=False, repr=False)


@dataclass
class WaypointReferenceSpec:
    points: list[tuple[float, float, float]] = field(default_factory=list)
    v_limit: float = 1.0
    a_limit: float = 0.5
    laps: int = 1
    pause: float = 0.0  # hover at each waypoint, seconds

    type: str = field(default="waypoints", init=False, repr=False)

    def __post_init__(self):
        if len(self.points) < 2:
            raise ConfigError("waypoint reference needs at least two points")
        if self.laps < 1:
            raise ConfigError("laps must be at least 1")


@dataclass
class BracketSpec:
    """Takeoff/settle/landing segments wrapped around the main reference."""

    settle_time: float = 3.0
    end_hold: float = 2.0
    ground_hold: float = 1.0
    transit_v: float = 1.0
    transit_a: float = 0.5


@dataclass
class WarmupSpec:
    """Inflated sensor noise right after start, mimicking an immature map."""

    duration: float = 0.0
    noise_factor: float = 1.0


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration: float = 30.0
    dt: float = 0.005
    plant: PlantParams = field(default_factory=PlantParams)
    profile: SensorProfile = field(
        default_factory=lambda: builtin_profiles()["carto-like"]
    )
    imu: ImuConfig = field(default_factory=ImuConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    gains: PidGains = field(default_factory=PidGains)
    reference: object = field(default_factory=StepReferenceSpec)
    bracket: BracketSpec = field(default_factory=BracketSpec)
    warmup: WarmupSpec = field(default_factory=WarmupSpec)
    loop_closure_events: list[LoopClosureEvent] = field(default_factory=list)
    output_dir: str | None = None
    log_full: bool = True

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if not 0.0 < self.dt <= 0.01:
            raise ConfigError("dt must lie in (0, 0.01]")
        master_rate = 1.0 / self.dt
        ratio = master_rate / self.imu.rate
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ConfigError(
                f"IMU rate {self.imu.rate} Hz must divide the master rate "
                f"{master_rate:g} Hz"
            )


def _take(raw: dict, allowed: dict[str, object], context: str) -> dict:
    """Apply defaults and reject unknown keys."""
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {sorted(unknown)}")
    merged = dict(allowed)
    merged.update(raw)
    return merged


_AXES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


def _parse_reference(raw: dict):
    kind = raw.get("type")
    if kind == "step_sequence":
        d = _take(raw, {
            "type": kind, "axis": "x", "amplitude": 1.0, "hold_time": 15.0,
            "repetitions": 2, "hover": [0.0, 0.0, 2.0],
        }, "reference")
        if d["axis"] not in _AXES:
            raise ConfigError(f"unknown step axis {d['axis']!r}")
        return StepReferenceSpec(
            axis=_AXES[d["axis"]],
            amplitude=float(d["amplitude"]),
            hold_time=float(d["hold_time"]),
            repetitions=int(d["repetitions"]),
            hover=tuple(float(v) for v in d["hover"]),
        )
    if kind == "helix":
        d = _take(raw, {
            "type": kind, "center": [0.0, 0.0], "radius": 2.5, "climb": 8.0,
            "start_altitude": 1.0, "turns": 3.0, "v_limit": 1.0,
            "a_limit": 0.5, "yaw_mode": "fixed",
        }, "reference")
        return HelixReferenceSpec(spec=HelixSpec(
            center=tuple(float(v) for v in d["center"]),
            radius=float(d["radius"]),
            climb=float(d["climb"]),
            start_altitude=float(d["start_altitude"]),
            turns=float(d["turns"]),
            v_limit=float(d["v_limit"]),
            a_limit=float(d["a_limit"]),
            yaw_mode=str(d["yaw_mode"]),
        ))
    if kind == "waypoints":
        d = _take(raw, {
            "type": kind, "points": None, "v_limit": 1.0, "a_limit": 0.5,
            "laps": 1, "pause": 0.0,
        }, "reference")
        if not d["points"]:
            raise ConfigError("waypoint reference needs points")
        return WaypointReferenceSpec(
            points=[tuple(float(v) for v in p) for p in d["points"]],
            v_limit=float(d["v_limit"]),
            a_limit=float(d["a_limit"]),
            laps=int(d["laps"]),
            pause=float(d["pause"]),
        )
    raise ConfigError(f"unknown reference type {kind!r}")


def _parse_profile(raw) -> SensorProfile:
    if isinstance(raw, str):
        profiles = builtin_profiles()
        if raw not in profiles:
            raise ConfigError(
                f"unknown profile {raw!r}; built-ins: {sorted(profiles)}"
            )
        return profiles[raw]
    if not isinstance(raw, dict):
        raise ConfigError("profile must be a name or an object")
    base = raw.get("base")
    if base is not None:
        defaults = _parse_profile(base)
        raw = {k: v for k, v in raw.items() if k != "base"}
    else:
        defaults = SensorProfile()
    fields = {
        "name": defaults.name, "rate": defaults.rate,
        "noise_sigma": defaults.noise_sigma,
        "drift_density": defaults.drift_density,
        "z_drift_multiplier": defaults.z_drift_multiplier,
        "degradation_altitude": defaults.degradation_altitude,
        "degradation_slope": defaults.degradation_slope,
        "loop_closure": defaults.loop_closure,
        "revisit_radius": defaults.revisit_radius,
        "min_revisit_interval": defaults.min_revisit_interval,
        "min_drift_trigger": defaults.min_drift_trigger,
        "smoothing_window": defaults.smoothing_window,
    }
    d = _take(raw, fields, "profile")
    return SensorProfile(**d)


def scenario_from_dict(raw: dict, name_hint: str = "scenario") -> ScenarioConfig:
    d = _take(raw, {
        "name": name_hint, "seed": 0, "duration": 30.0, "dt": 0.005,
        "plant": {}, "profile": "carto-like", "imu": {}, "filter": {},
        "controller": {}, "reference": {"type": "step_sequence"},
        "bracket": {}, "warmup": {}, "loop_closure_events": [],
        "output_dir": None, "log_full": True,
    }, "scenario")

    plant_d = _take(d["plant"], {
        "mass": 9.0, "max_thrust_to_weight": 3.0, "tau_attitude": 0.15,
        "tau_yaw_rate": 0.1, "drag": 0.1, "gravity": 9.81,
    }, "plant")
    plant = PlantParams(**plant_d)

    profile = _parse_profile(d["profile"])

    imu_d = _take(d["imu"], {
        "rate": 200.0, "noise_sigma": 0.1, "bias": [0.0, 0.0, 0.0],
        "max_accel": 160.0,
    }, "imu")
    imu_d["bias"] = tuple(float(v) for v in imu_d["bias"])
    imu = ImuConfig(**imu_d)

    filt_d = _take(d["filter"], {
        "q_diag": (1e-4, 1e-3, 1e-2), "r_pos": None, "r_acc": None,
        "prior_diag": (1e-2, 1.0, 1.0), "hold_factor": 1e9,
    }, "filter")
    # Measurement variances default to the simulated sensors' own noise.
    if filt_d["r_pos"] is None:
        filt_d["r_pos"] = tuple(
            np.maximum(np.asarray(profile.noise_sigma) ** 2, R_FLOOR)
        )
    if filt_d["r_acc"] is None:
        filt_d["r_acc"] = max(imu.noise_sigma**2, R_FLOOR)
    filt_d["imu_rate"] = imu.rate
    filt_d["q_diag"] = tuple(filt_d["q_diag"])
    filt_d["prior_diag"] = tuple(filt_d["prior_diag"])
    filt = FilterConfig(**filt_d)

    ctrl_d = _take(d["controller"], {
        "kp_pos": 1.4, "kp_vel": 1.4, "ki_vel": 0.4, "kd_vel": 0.12,
        "kff_vel": 1.0, "kff_acc": 1.0, "kp_yaw": 1.0, "vel_limit": 4.0,
        "integrator_limit": 1.0, "accel_limit": 5.0, "deriv_cutoff": 20.0,
    }, "controller")
    gains = PidGains(**ctrl_d)

    bracket_d = _take(d["bracket"], {
        "settle_time": 3.0, "end_hold": 2.0, "ground_hold": 1.0,
        "transit_v": 1.0, "transit_a": 0.5,
    }, "bracket")
    bracket = BracketSpec(**bracket_d)

    warm_d = _take(d["warmup"], {"duration": 0.0, "noise_factor": 1.0}, "warmup")
    warmup = WarmupSpec(**warm_d)

    events = []
    for ev in d["loop_closure_events"]:
        ev_d = _take(ev, {"time": None, "delta": None}, "loop_closure_events")
        if ev_d["time"] is None or ev_d["delta"] is None:
            raise ConfigError("scripted events need 'time' and 'delta'")
        events.append(LoopClosureEvent(float(ev_d["time"]), ev_d["delta"]))

    try:
        reference = _parse_reference(d["reference"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad reference: {exc}") from exc

    return ScenarioConfig(
        name=str(d["name"]),
        seed=int(d["seed"]),
        duration=float(d["duration"]),
        dt=float(d["dt"]),
        plant=plant,
        profile=profile,
        imu=imu,
        filter=filt,
        gains=gains,
        reference=reference,
        bracket=bracket,
        warmup=warmup,
        loop_closure_events=events,
        output_dir=d["output_dir"],
        log_full=bool(d["log_full"]),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(raw, name_hint=path.stem)


@dataclass
class SuiteConfig:
    name: str
    seeds: list[int]
    scenarios: list[ScenarioConfig]
    output_dir: str | None = None


def load_suite(path: str | Path) -> SuiteConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    d = _take(raw, {
        "name": path.stem, "seeds": [0], "scenarios": None, "output_dir": None,
    }, "suite")
    if not d["scenarios"]:
        raise ConfigError("suite needs at least one scenario")
    scenarios = []
    for i, entry in enumerate(d["scenarios"]):
        if isinstance(entry, str):
            scenarios.append(load_scenario(path.parent / entry))
        else:
            scenarios.append(scenario_from_dict(entry, name_hint=f"scenario_{i}"))
    return SuiteConfig(
        name=str(d["name"]),
        seeds=[int(s) for s in d["seeds"]],
        scenarios=scenarios,
        output_dir=d["output_dir"],
    )
