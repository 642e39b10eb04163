"""Statistical surrogates for SLAM pose output and IMU acceleration.

Instead of running a real scan-matching pipeline, each pose source draws
measurements from ground truth plus a parameterized error model: white
noise, random-walk drift, altitude-dependent noise growth, and discrete
loop-closure corrections with an optional exponential step smoother.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

# Residual terms below this fraction of their initial size no longer
# contribute visibly and are pruned from the smoother.
_SMOOTHER_PRUNE = 1e-9


def _as_vec3(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,):
        arr = np.repeat(arr, 3)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a scalar or length-3 sequence")
    return arr


@dataclass(frozen=True)
class PoseMeasurement:
    """Timestamped position + yaw as published by a pose source.

    Values are expected finite; consumers drop non-finite messages rather
    than this type rejecting them, so sensor glitches stay observable.
    """

    timestamp: float
    position: np.ndarray
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.position.shape != (3,):
            raise ValueError("position must be a 3-vector")


@dataclass(frozen=True)
class AccelMeasurement:
    """Timestamped inertial-frame, gravity-compensated acceleration."""

    timestamp: float
    acceleration: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "acceleration", np.asarray(self.acceleration, dtype=float)
        )
        if self.acceleration.shape != (3,):
            raise ValueError("acceleration must be a 3-vector")


@dataclass(frozen=True)
class LoopClosureEvent:
    """A discrete pose correction: the raw output steps by ``delta`` at ``time``."""

    time: float
    delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float))
        if self.delta.shape != (3,):
            raise ValueError("delta must be a 3-vector")


@dataclass
class SensorProfile:
    """Statistical model of one SLAM-like pose source.

    Parameters
    ----------
    rate : float
        Publish rate in Hz.
    noise_sigma : float or (3,) array
        White noise standard deviation per axis, meters.
    drift_density : float or (3,) array
        Random-walk drift density per axis, m/sqrt(s).
    z_drift_multiplier : float
        Extra scale on the z-axis drift density.
    degradation_altitude : float
        Altitude (m) above which white noise starts growing.
    degradation_slope : float
        Fractional noise growth per meter above the degradation altitude;
        sigma_eff = sigma * (1 + slope * max(0, altitude - h_deg)).
    loop_closure : bool
        Whether revisiting a previously seen location corrects the drift.
    revisit_radius : float
        Distance (m) within which a past location counts as revisited.
    min_revisit_interval : float
        A past location must be at least this old (s) to trigger a closure.
    min_drift_trigger : float
        Accumulated |drift| (m) below which a revisit is not worth a closure.
    smoothing_window : float
        Window (s) over which loop-closure steps are smoothed away;
        0 disables smoothing.
    """

    name: str = "custom"
    rate: float = 50.0
    noise_sigma: float | np.ndarray = 0.02
    drift_density: float | np.ndarray = 0.0
    z_drift_multiplier: float = 1.0
    degradation_altitude: float = 4.0
    degradation_slope: float = 0.0
    loop_closure: bool = False
    revisit_radius: float = 3.0
    min_revisit_interval: float = 30.0
    min_drift_trigger: float = 0.1
    smoothing_window: float = 0.0

    def __post_init__(self):
        self.noise_sigma = _as_vec3(self.noise_sigma, "noise_sigma")
        self.drift_density = _as_vec3(self.drift_density, "drift_density")
        if self.rate <= 0:
            raise ValueError("rate must be positive")
        if (self.noise_sigma < 0).any() or (self.drift_density < 0).any():
            raise ValueError("noise and drift densities must be non-negative")
        if self.degradation_altitude <= 0:
            raise ValueError("degradation_altitude must be positive")
        if self.smoothing_window < 0:
            raise ValueError("smoothing_window must be non-negative")


def builtin_profiles() -> dict[str, SensorProfile]:
    """Profiles for the two pose-source characters used throughout.

    The rates are the published ones (50 Hz vs 20 Hz); noise and drift
    magnitudes are calibration constants chosen so long missions land with
    a few-decimeter reported-position error and so the low-rate source
    degrades above its feature-starvation altitude.
    """
    return {
        "carto-like": SensorProfile(
            name="carto-like",
            rate=50.0,
            noise_sigma=0.02,
            drift_density=0.002,
            z_drift_multiplier=1.0,
            degradation_slope=0.0,
            loop_closure=True,
            smoothing_window=5.0,
        ),
        "loam-like": SensorProfile(
            name="loam-like",
            rate=20.0,
            noise_sigma=0.03,
            drift_density=0.005,
            z_drift_multiplier=4.0,
            degradation_altitude=4.0,
            degradation_slope=2.0,
            loop_closure=False,
            smoothing_window=0.0,
        ),
    }


class StepSmoother:
    """Exponentially bleeds away discrete steps in a measurement stream.

    A step of ``delta`` at time ``t0`` is counteracted by adding
    ``-delta * exp(-(t - t0)/tau)`` to subsequent samples, with
    ``tau = window / 5`` so the residual at ``t0 + window`` is
    ``exp(-5)`` (about 0.67%) of the step. The output is continuous at the
    event and converges to the raw stream. Overlapping steps superpose.
    """

    def __init__(self, window: float):
        if window < 0:
            raise ValueError("smoothing window must be non-negative")
        self.window = window
        self.tau = window / 5.0 if window > 0 else 0.0
        self._residuals: list[tuple[float, np.ndarray]] = []

    def add_step(self, time: float, delta: np.ndarray) -> None:
        if self.window <= 0:
            return
        self._residuals.append((time, np.asarray(delta, dtype=float)))

    def offset(self, time: float) -> np.ndarray:
        """Correction to add to the raw sample at ``time``."""
        total = np.zeros(3)
        if not self._residuals:
            return total
        keep = []
        for t0, delta in self._residuals:
            w = math.exp(-(time - t0) / self.tau) if time >= t0 else 1.0
            total -= delta * w
            if w > _SMOOTHER_PRUNE:
                keep.append((t0, delta))
        self._residuals = keep
        return total

    def apply(self, raw: PoseMeasurement) -> PoseMeasurement:
        if self.window <= 0 or not self._residuals:
            return raw
        return PoseMeasurement(
            raw.timestamp, raw.position + self.offset(raw.timestamp), raw.yaw
        )


class SlamPoseSource:
    """Generates raw and smoothed pose measurements from ground truth.

    Owns its RNG and drift state; independent sources never share state.
    ``sample`` must be called every simulation tick and emits only on the
    profile's rate grid.
    """

    # Anchor spacing for the revisit history; 1 Hz bounds memory while
    # keeping the revisit radius test meaningful at mission speeds.
    HISTORY_PERIOD = 1.0

    def __init__(
        self,
        profile: SensorProfile,
        rng: np.random.Generator,
        scripted_events: list[LoopClosureEvent] | None = None,
        start_time: float = 0.0,
    ):
        self.profile = profile
        self._rng = rng
        self._period = 1.0 / profile.rate
        self._next_emit = start_time
        self._drift = np.zeros(3)
        self._offset = np.zeros(3)
        self._drift_scale = profile.drift_density * np.array(
            [1.0, 1.0, profile.z_drift_multiplier]
        )
        self.smoother = StepSmoother(profile.smoothing_window)
        self.events: list[LoopClosureEvent] = []
        self._scripted = sorted(scripted_events or [], key=lambda e: e.time)
        self._anchor_t: list[float] = []
        self._anchor_p: list[np.ndarray] = []
        # An anchor only counts as revisitable once the vehicle has left its
        # radius; loitering in place is not a loop closure.
        self._anchor_departed: list[bool] = []
        self._next_anchor = start_time
        self._in_revisit = False
        self._last_timestamp = -math.inf
        self._warmup_until = -math.inf
        self._warmup_factor = 1.0

    @property
    def drift_bias(self) -> np.ndarray:
        return self._drift.copy()

    def set_warmup(self, duration: float, noise_factor: float) -> None:
        """Inflate white noise until ``duration``, mimicking an immature map."""
        if noise_factor < 1.0:
            raise ValueError("warmup noise factor must be at least 1")
        self._warmup_until = duration
        self._warmup_factor = noise_factor

    def sample(
        self, truth_position: np.ndarray, truth_yaw: float, t: float
    ) -> tuple[PoseMeasurement | None, PoseMeasurement | None]:
        """Advance the source to time ``t``; returns (raw, smoothed) or Nones.

        Emits at most one measurement per call, on the profile's rate grid.
        """
        self._record_history(truth_position, t)
        if t + 1e-9 < self._next_emit:
            return None, None
        self._next_emit += self._period

        # Random walk accumulates between emissions, one step per sample.
        step_sigma = self._drift_scale * math.sqrt(self._period)
        self._drift += self._rng.normal(0.0, 1.0, 3) * step_sigma

        self._fire_scripted(t)
        if self.profile.loop_closure:
            self._maybe_loop_close(truth_position, t)

        sigma = self.profile.noise_sigma * self._noise_growth(truth_position[2])
        if t < self._warmup_until:
            sigma = sigma * self._warmup_factor
        noise = self._rng.normal(0.0, 1.0, 3) * sigma
        raw_pos = truth_position + self._drift + self._offset + noise
        raw = PoseMeasurement(t, raw_pos, truth_yaw)
        smoothed = self.smoother.apply(raw)
        self._last_timestamp = t
        return raw, smoothed

    def _noise_growth(self, altitude: float) -> float:
        excess = max(0.0, altitude - self.profile.degradation_altitude)
        return 1.0 + self.profile.degradation_slope * excess

    def _fire_scripted(self, t: float) -> None:
        while self._scripted and self._scripted[0].time <= t:
            event = self._scripted.pop(0)
            fired = LoopClosureEvent(t, event.delta)
            self._offset += fired.delta
            self.smoother.add_step(t, fired.delta)
            self.events.append(fired)

    def _maybe_loop_close(self, position: np.ndarray, t: float) -> None:
        """Correct accumulated drift when re-entering a previously seen area."""
        prof = self.profile
        if not self._anchor_t:
            return
        dist = np.linalg.norm(np.asarray(self._anchor_p) - position, axis=1)
        departed = np.asarray(self._anchor_departed)
        outside = dist > prof.revisit_radius
        if (outside & ~departed).any():
            newly = np.flatnonzero(outside & ~departed)
            for i in newly:
                self._anchor_departed[i] = True
            departed[newly] = True
        old_enough = t - np.asarray(self._anchor_t) >= prof.min_revisit_interval
        near = bool((old_enough & departed & ~outside).any())
        if not near:
            self._in_revisit = False
            return
        if self._in_revisit:
            return
        self._in_revisit = True
        if np.linalg.norm(self._drift) <= prof.min_drift_trigger:
            return
        delta = -self._drift.copy()
        self._drift[:] = 0.0
        event = LoopClosureEvent(t, delta)
        self.smoother.add_step(t, delta)
        self.events.append(event)

    def _record_history(self, position: np.ndarray, t: float) -> None:
        if t + 1e-9 >= self._next_anchor:
            self._anchor_t.append(t)
            self._anchor_p.append(position.copy())
            self._anchor_departed.append(False)
            self._next_anchor += self.HISTORY_PERIOD


@dataclass
class ImuConfig:
    """Inertial sensor model: additive white noise plus a constant bias."""

    rate: float = 200.0
    noise_sigma: float = 0.1
    bias: tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_accel: float = 160.0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("IMU rate must be positive")
        if self.noise_sigma < 0:
            raise ValueError("IMU noise sigma must be non-negative")
        if self.max_accel <= 0:
            raise ValueError("IMU range must be positive")


class ImuSource:
    """Samples gravity-compensated inertial-frame acceleration at a fixed rate."""

    def __init__(
        self, cfg: ImuConfig, rng: np.random.Generator, start_time: float = 0.0
    ):
        self.cfg = cfg
        self._rng = rng
        self._period = 1.0 / cfg.rate
        self._next_emit = start_time
        self._bias = np.asarray(cfg.bias, dtype=float)

    def sample(self, truth_accel: np.ndarray, t: float) -> AccelMeasurement | None:
        if t + 1e-9 < self._next_emit:
            return None
        self._next_emit += self._period
        noisy = truth_accel + self._bias + self._rng.normal(
            0.0, 1.0, 3
        ) * self.cfg.noise_sigma
        clipped = np.clip(noisy, -self.cfg.max_accel, self.cfg.max_accel)
        return AccelMeasurement(t, clipped)
