"""Reference trajectory generation: step sequences, helices, line segments.

All sampled trajectories carry exact analytic velocity and acceleration
fields consistent with their positions, so feedforward terms and
finite-difference checks agree. Smooth trajectories share one trapezoidal
speed profile on a scalar path parameter; per-axis velocity and
acceleration limits are enforced analytically, including the centripetal
term on circular arcs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InfeasibleTrajectoryError(ValueError):
    """The requested geometry cannot meet its kinematic constraints."""


# Fraction of the acceleration budget available to the centripetal term at
# cruise speed; the remainder stays free for tangential acceleration during
# the ramps, where both terms act at once.
CENTRIPETAL_BUDGET = 0.8


@dataclass(frozen=True)
class TrajectoryPoint:
    """One reference sample: position, exact derivatives, and yaw."""

    timestamp: float
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    yaw: float = 0.0


@dataclass(frozen=True)
class TrajectoryStream:
    """Uniformly sampled reference with analytic derivative fields."""

    t: np.ndarray
    position: np.ndarray      # (n, 3)
    velocity: np.ndarray      # (n, 3)
    acceleration: np.ndarray  # (n, 3)
    yaw: np.ndarray           # (n,)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def point(self, i: int) -> TrajectoryPoint:
        return TrajectoryPoint(
            float(self.t[i]), self.position[i], self.velocity[i],
            self.acceleration[i], float(self.yaw[i]),
        )


@dataclass(frozen=True)
class StepEvent:
    """Onset of one reference step, for response metrics."""

    time: float
    axis: int
    start: float
    target: float

    @property
    def amplitude(self) -> float:
        return self.target - self.start


@dataclass(frozen=True)
class HelixSpec:
    """Upward helix geometry and per-axis kinematic constraints."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 2.5
    climb: float = 8.0
    start_altitude: float = 1.0
    turns: float = 3.0
    v_limit: float = 1.0
    a_limit: float = 0.5
    yaw_mode: str = "fixed"

    def __post_init__(self):
        if min(self.radius, self.climb, self.v_limit, self.a_limit, self.turns) <= 0:
            raise InfeasibleTrajectoryError(
                "radius, climb, turns and limits must be positive"
            )
        if self.yaw_mode not in ("fixed", "tangent"):
            raise InfeasibleTrajectoryError("yaw_mode must be 'fixed' or 'tangent'")

    @property
    def start_point(self) -> np.ndarray:
        return np.array(
            [self.center[0] + self.radius, self.center[1], self.start_altitude]
        )

    @property
    def end_point(self) -> np.ndarray:
        theta = 2.0 * math.pi * self.turns
        return np.array([
            self.center[0] + self.radius * math.cos(theta),
            self.center[1] + self.radius * math.sin(theta),
            self.start_altitude + self.climb,
        ])


class TrapezoidProfile:
    """Scalar path parameter from 0 to ``length`` under v/a limits.

    Falls back to a triangular profile when the distance is too short to
    reach cruise speed. Velocity is continuous everywhere (C1 path).
    """

    def __init__(self, length: float, v_max: float, a_max: float):
        if length < 0 or v_max <= 0 or a_max <= 0:
            raise InfeasibleTrajectoryError("profile needs positive limits")
        self.length = length
        if length == 0:
            self.v_peak = 0.0
            self.a = a_max
            self.t_ramp = 0.0
            self.t_cruise = 0.0
        else:
            v_peak = min(v_max, math.sqrt(a_max * length))
            self.v_peak = v_peak
            self.a = a_max
            self.t_ramp = v_peak / a_max
            self.t_cruise = max(0.0, (length - v_peak * self.t_ramp) / v_peak)
        self.total_time = 2.0 * self.t_ramp + self.t_cruise

    def eval(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, velocity, acceleration along the path at times ``t``."""
        t = np.asarray(t, dtype=float)
        s = np.empty_like(t)
        v = np.empty_like(t)
        a = np.empty_like(t)

        t1, t2, tf = self.t_ramp, self.t_ramp + self.t_cruise, self.total_time
        before = t < 0.0
        ramp_up = (t >= 0.0) & (t < t1)
        cruise = (t >= t1) & (t < t2)
        ramp_down = (t >= t2) & (t < tf)
        after = t >= tf

        s[before], v[before], a[before] = 0.0, 0.0, 0.0
        tu = t[ramp_up]
        s[ramp_up] = 0.5 * self.a * tu**2
        v[ramp_up] = self.a * tu
        a[ramp_up] = self.a
        tc = t[cruise] - t1
        s_ramp = 0.5 * self.a * t1**2
        s[cruise] = s_ramp + self.v_peak * tc
        v[cruise] = self.v_peak
        a[cruise] = 0.0
        td = tf - t[ramp_down]
        s[ramp_down] = self.length - 0.5 * self.a * td**2
        v[ramp_down] = self.a * td
        a[ramp_down] = -self.a
        s[after], v[after], a[after] = self.length, 0.0, 0.0
        return s, v, a


def _time_grid(duration: float, dt: float) -> np.ndarray:
    n = int(math.floor(duration / dt + 1e-9)) + 1
    return np.arange(n) * dt


def step_sequence(
    axis: int,
    amplitude: float,
    hold_time: float,
    repetitions: int,
    start: np.ndarray | None = None,
    dt: float = 0.005,
    yaw: float = 0.0,
) -> tuple[TrajectoryStream, list[StepEvent]]:
    """Alternating positive/negative position steps on one axis.

    The stream holds the start point for one hold period, then alternates
    +amplitude / -amplitude about it, ``repetitions`` times each.
    Velocity and acceleration setpoints are identically zero; the other
    axes hold their start values.
    """
    if amplitude == 0:
        raise ValueError("step amplitude must be non-zero")
    if hold_time <= 0:
        raise ValueError("hold time must be positive")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    if axis not in (0, 1, 2):
        raise ValueError("axis must be 0 (x), 1 (y) or 2 (z)")
    start = np.zeros(3) if start is None else np.asarray(start, dtype=float)

    offsets = [0.0]
    for _ in range(repetitions):
        offsets.extend([amplitude, -amplitude])
    n_segments = len(offsets)
    duration = n_segments * hold_time
    t = _time_grid(duration, dt)

    seg = np.minimum((t / hold_time + 1e-9).astype(int), n_segments - 1)
    pos = np.tile(start, (len(t), 1))
    pos[:, axis] = start[axis] + np.asarray(offsets)[seg]

    events = []
    for k in range(1, n_segments):
        events.append(StepEvent(
            time=k * hold_time,
            axis=axis,
            start=start[axis] + offsets[k - 1],
            target=start[axis] + offsets[k],
        ))
    stream = TrajectoryStream(
        t=t,
        position=pos,
        velocity=np.zeros((len(t), 3)),
        acceleration=np.zeros((len(t), 3)),
        yaw=np.full(len(t), yaw),
    )
    return stream, events


def helix(spec: HelixSpec, dt: float = 0.005) -> TrajectoryStream:
    """Upward helix under per-axis velocity and acceleration limits.

    One trapezoidal profile drives a shared path parameter u in [0, 1];
    the angle and the climb both follow u, so horizontal and vertical
    motion start and stop together. The profile rates are capped so that
    every axis satisfies |v| <= v_limit and |a| <= a_limit analytically:
    horizontal speed r*theta', horizontal acceleration r*theta'' plus the
    centripetal r*theta'^2, and the climb-axis terms.
    """
    theta_total = 2.0 * math.pi * spec.turns
    l_xy = spec.radius * theta_total
    l_z = spec.climb

    du_caps = [
        spec.v_limit / l_xy,
        spec.v_limit / l_z,
        math.sqrt(CENTRIPETAL_BUDGET * spec.a_limit / spec.radius) / theta_total,
    ]
    du_max = min(du_caps)
    centripetal_at_cruise = spec.radius * (theta_total * du_max) ** 2
    ddu_caps = [
        spec.a_limit / l_z,
        (spec.a_limit - centripetal_at_cruise) / l_xy,
    ]
    ddu_max = min(ddu_caps)
    if du_max <= 0 or ddu_max <= 0:
        raise InfeasibleTrajectoryError(
            f"helix cannot satisfy limits v={spec.v_limit}, a={spec.a_limit}"
        )

    profile = TrapezoidProfile(1.0, du_max, ddu_max)
    t = _time_grid(profile.total_time, dt)
    u, du, ddu = profile.eval(t)

    theta = theta_total * u
    theta_d = theta_total * du
    theta_dd = theta_total * ddu
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    r = spec.radius

    pos = np.empty((len(t), 3))
    vel = np.empty((len(t), 3))
    acc = np.empty((len(t), 3))
    pos[:, 0] = spec.center[0] + r * cos_t
    pos[:, 1] = spec.center[1] + r * sin_t
    pos[:, 2] = spec.start_altitude + spec.climb * u
    vel[:, 0] = -r * sin_t * theta_d
    vel[:, 1] = r * cos_t * theta_d
    vel[:, 2] = spec.climb * du
    acc[:, 0] = -r * cos_t * theta_d**2 - r * sin_t * theta_dd
    acc[:, 1] = -r * sin_t * theta_d**2 + r * cos_t * theta_dd
    acc[:, 2] = spec.climb * ddu

    if spec.yaw_mode == "tangent":
        yaw = theta + 0.5 * math.pi
    else:
        yaw = np.zeros(len(t))
    return TrajectoryStream(t=t, position=pos, velocity=vel, acceleration=acc, yaw=yaw)


def line_segment(
    p0: np.ndarray,
    p1: np.ndarray,
    v_limit: float,
    a_limit: float,
    dt: float = 0.005,
    yaw: float = 0.0,
) -> TrajectoryStream:
    """Straight run from rest at ``p0`` to rest at ``p1``.

    The trapezoid limits apply to the per-axis projections, so the
    worst-oriented axis still respects the configured bounds.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    direction = p1 - p0
    length = float(np.linalg.norm(direction))
    if length == 0.0:
        return hold_point(p0, dt, dt, yaw=yaw)
    unit = direction / length
    scale = np.max(np.abs(unit))
    profile = TrapezoidProfile(length, v_limit / scale, a_limit / scale)
    t = _time_grid(profile.total_time, dt)
    s, v, a = profile.eval(t)
    return TrajectoryStream(
        t=t,
        position=p0 + np.outer(s, unit),
        velocity=np.outer(v, unit),
        acceleration=np.outer(a, unit),
        yaw=np.full(len(t), yaw),
    )


def hold_point(
    p: np.ndarray, duration: float, dt: float = 0.005, yaw: float = 0.0
) -> TrajectoryStream:
    """Hover in place for ``duration`` seconds."""
    t = _time_grid(duration, dt)
    n = len(t)
    return TrajectoryStream(
        t=t,
        position=np.tile(np.asarray(p, dtype=float), (n, 1)),
        velocity=np.zeros((n, 3)),
        acceleration=np.zeros((n, 3)),
        yaw=np.full(n, yaw),
    )


def concatenate(streams: list[TrajectoryStream]) -> TrajectoryStream:
    """Join streams end to end, shifting each to start where the last ended.

    Every stream's first sample is dropped except the first's, so the
    joined time grid stays uniform.
    """
    if not streams:
        raise ValueError("nothing to concatenate")
    parts_t = [streams[0].t]
    parts = [(streams[0].position, streams[0].velocity,
              streams[0].acceleration, streams[0].yaw)]
    offset = float(streams[0].t[-1])
    dt = float(streams[0].t[1] - streams[0].t[0]) if len(streams[0]) > 1 else 0.0
    for s in streams[1:]:
        parts_t.append(s.t[1:] + offset)
        parts.append((s.position[1:], s.velocity[1:], s.acceleration[1:], s.yaw[1:]))
        offset += float(s.t[-1])
    return TrajectoryStream(
        t=np.concatenate(parts_t),
        position=np.concatenate([p[0] for p in parts]),
        velocity=np.concatenate([p[1] for p in parts]),
        acceleration=np.concatenate([p[2] for p in parts]),
        yaw=np.concatenate([p[3] for p in parts]),
    )
