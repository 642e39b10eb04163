"""Cascade position/velocity controller producing attitude commands.

Outer loop: proportional position control plus velocity feedforward,
yielding a velocity setpoint. Inner loop: PID on velocity error plus
acceleration feedforward, yielding a desired acceleration that a
small-angle map converts to roll, pitch, yaw rate and normalized thrust.
The derivative term acts on the measured velocity (not the error) through
a first-order low-pass, so setpoint steps cause no derivative kick.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .vehicle import GRAVITY, MAX_TILT


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % (2.0 * math.pi)


@dataclass(frozen=True)
class AttitudeCommand:
    """Controller output: the attitude-loop setpoint.

    Angles are clamped to the 0.8 rad airframe envelope and thrust to
    [0, 1] at construction, so every instance satisfies the command
    contract no matter what produced it.
    """

    roll: float
    pitch: float
    yaw_rate: float
    thrust: float

    def __post_init__(self):
        object.__setattr__(self, "roll", _clamp(self.roll, MAX_TILT))
        object.__setattr__(self, "pitch", _clamp(self.pitch, MAX_TILT))
        object.__setattr__(self, "thrust", min(1.0, max(0.0, self.thrust)))


def _clamp(value: float, limit: float) -> float:
    if not math.isfinite(value):
        return 0.0
    return max(-limit, min(limit, value))


def _gain_vec(value, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,):
        arr = np.repeat(arr, 3)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a scalar or length-3 sequence")
    if (arr < 0).any():
        raise ValueError(f"{name} must be non-negative")
    return arr


@dataclass
class PidGains:
    """Per-axis gains and limits for the cascade.

    The outer loop is P-only by default; outer I/D can be enabled by
    moving gains into ``kp_pos`` style fields via configuration but the
    stock cascade keeps integral action in the velocity loop only.
    """

    kp_pos: float | np.ndarray = 1.4
    kp_vel: float | np.ndarray = 1.4
    ki_vel: float | np.ndarray = 0.4
    kd_vel: float | np.ndarray = 0.12
    kff_vel: float = 1.0
    kff_acc: float = 1.0
    kp_yaw: float = 1.0
    vel_limit: float | np.ndarray = 4.0
    integrator_limit: float = 1.0
    accel_limit: float = 5.0
    deriv_cutoff: float = 20.0  # rad/s low-pass on the derivative term

    def __post_init__(self):
        self.kp_pos = _gain_vec(self.kp_pos, "kp_pos")
        self.kp_vel = _gain_vec(self.kp_vel, "kp_vel")
        self.ki_vel = _gain_vec(self.ki_vel, "ki_vel")
        self.kd_vel = _gain_vec(self.kd_vel, "kd_vel")
        self.vel_limit = _gain_vec(self.vel_limit, "vel_limit")
        if min(self.kff_vel, self.kff_acc, self.kp_yaw) < 0:
            raise ValueError("feedforward and yaw gains must be non-negative")
        if min(self.integrator_limit, self.accel_limit, self.deriv_cutoff) <= 0:
            raise ValueError("limits must be positive")


@dataclass
class ControlState:
    """Mutable loop state: integrator, derivative filter memory, last command."""

    integrator: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_vel: np.ndarray | None = None
    deriv: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_command: AttitudeCommand | None = None

    def reset(self) -> None:
        self.integrator[:] = 0.0
        self.prev_vel = None
        self.deriv[:] = 0.0
        self.last_command = None


def position_loop(
    ref_pos: np.ndarray, ref_vel: np.ndarray, est_pos: np.ndarray, gains: PidGains
) -> np.ndarray:
    """Velocity setpoint from position error plus velocity feedforward."""
    v_sp = gains.kp_pos * (ref_pos - est_pos) + gains.kff_vel * ref_vel
    return np.minimum(np.maximum(v_sp, -gains.vel_limit), gains.vel_limit)


def velocity_loop(
    v_sp: np.ndarray,
    est_vel: np.ndarray,
    ref_acc: np.ndarray,
    gains: PidGains,
    state: ControlState,
    dt: float,
) -> np.ndarray:
    """Desired acceleration from the velocity PID plus acceleration feedforward."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    error = v_sp - est_vel

    state.integrator += gains.ki_vel * error * dt
    lim = gains.integrator_limit
    np.minimum(np.maximum(state.integrator, -lim, out=state.integrator), lim,
               out=state.integrator)

    # Derivative on measurement: d(error)/dt = -d(vel)/dt when the setpoint
    # holds, so steps in v_sp cause no kick.
    if state.prev_vel is None:
        raw_deriv = np.zeros(3)
    else:
        raw_deriv = -(est_vel - state.prev_vel) / dt
    state.prev_vel = est_vel.copy()
    alpha = dt * gains.deriv_cutoff / (1.0 + dt * gains.deriv_cutoff)
    state.deriv += alpha * (raw_deriv - state.deriv)

    a_des = (
        gains.kp_vel * error
        + state.integrator
        + gains.kd_vel * state.deriv
        + gains.kff_acc * ref_acc
    )
    return np.minimum(np.maximum(a_des, -gains.accel_limit), gains.accel_limit)


def acceleration_to_attitude(
    a_des: np.ndarray,
    yaw_est: float,
    yaw_ref: float,
    hover_thrust: float,
    gains: PidGains,
    gravity: float = GRAVITY,
) -> AttitudeCommand:
    """Small-angle map from desired acceleration to an attitude command."""
    if not 0.0 < hover_thrust < 1.0:
        raise ValueError("hover thrust must lie in (0, 1)")
    cy, sy = math.cos(yaw_est), math.sin(yaw_est)
    pitch = (a_des[0] * cy + a_des[1] * sy) / gravity
    roll = (a_des[0] * sy - a_des[1] * cy) / gravity
    thrust = hover_thrust * (1.0 + a_des[2] / gravity)
    yaw_rate = gains.kp_yaw * wrap_angle(yaw_ref - yaw_est)
    return AttitudeCommand(roll=roll, pitch=pitch, yaw_rate=yaw_rate, thrust=thrust)


class CascadeController:
    """Position -> velocity -> attitude cascade with feedforward.

    A pure state machine: one ``update`` per control period using the
    latest estimate (zero-order hold between estimates).
    """

    def __init__(self, gains: PidGains, hover_thrust: float, gravity: float = GRAVITY):
        self.gains = gains
        self.hover_thrust = hover_thrust
        self.gravity = gravity
        self.state = ControlState()

    def reset(self) -> None:
        self.state.reset()

    def update(
        self,
        ref_pos: np.ndarray,
        ref_vel: np.ndarray,
        ref_acc: np.ndarray,
        ref_yaw: float,
        est_pos: np.ndarray,
        est_vel: np.ndarray,
        est_yaw: float,
        dt: float,
    ) -> AttitudeCommand:
        v_sp = position_loop(ref_pos, ref_vel, est_pos, self.gains)
        a_des = velocity_loop(v_sp, est_vel, ref_acc, self.gains, self.state, dt)
        cmd = acceleration_to_attitude(
            a_des, est_yaw, ref_yaw, self.hover_thrust, self.gains, self.gravity
        )
        self.state.last_command = cmd
        return cmd
