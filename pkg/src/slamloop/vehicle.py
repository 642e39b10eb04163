"""Simplified quadrotor plant: translational point mass under attitude lag.

The inner attitude loop of the real autopilot is abstracted as a
first-order lag on roll/pitch and on the yaw rate. Thrust acts along the
body z-axis; integration is semi-implicit Euler (velocity first, then
position), which keeps the free-fall velocity exact and bounds the energy
drift per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GRAVITY = 9.81

MAX_TILT = 0.8  # rad, airframe envelope for roll and pitch


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the simulated airframe.

    Defaults describe a 9 kg-class quadrotor (four motors at 68 N max
    thrust each). The attitude time constant and drag coefficient are
    declared free parameters: no measurement pins them, and rise-time
    results depend on them.
    """

    mass: float = 9.0
    max_thrust_to_weight: float = 3.0
    tau_attitude: float = 0.15
    tau_yaw_rate: float = 0.1
    drag: float = 0.1
    gravity: float = GRAVITY

    def __post_init__(self):
        if min(self.mass, self.max_thrust_to_weight, self.tau_attitude,
               self.tau_yaw_rate, self.gravity) <= 0 or self.drag < 0:
            raise ValueError("plant parameters must be positive (drag non-negative)")
        if self.max_thrust_to_weight <= 1:
            raise ValueError("thrust-to-weight must exceed 1")

    @property
    def hover_thrust(self) -> float:
        """Normalized thrust at which vertical acceleration is zero."""
        return 1.0 / self.max_thrust_to_weight


@dataclass(frozen=True)
class VehicleState:
    """Ground-truth kinematic state.

    ``yaw_rate`` is the internal first-order lag state of the yaw channel;
    everything else is directly observable truth.
    """

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0
    yaw_rate: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if self.position.shape != (3,) or self.velocity.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")


def _dynamics(state: VehicleState, cmd, params: PlantParams, dt: float):
    """Post-lag attitude and the net acceleration acting over the step."""
    decay = math.exp(-dt / params.tau_attitude)
    roll = cmd.roll + (state.roll - cmd.roll) * decay
    pitch = cmd.pitch + (state.pitch - cmd.pitch) * decay
    roll = max(-MAX_TILT, min(MAX_TILT, roll))
    pitch = max(-MAX_TILT, min(MAX_TILT, pitch))
    decay_r = math.exp(-dt / params.tau_yaw_rate)
    yaw_rate = cmd.yaw_rate + (state.yaw_rate - cmd.yaw_rate) * decay_r

    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(state.yaw), math.sin(state.yaw)
    specific_thrust = cmd.thrust * params.max_thrust_to_weight * params.gravity
    acc = np.array([
        specific_thrust * (cy * sp * cr + sy * sr),
        specific_thrust * (sy * sp * cr - cy * sr),
        specific_thrust * (cp * cr) - params.gravity,
    ])
    if params.drag:
        acc -= params.drag * state.velocity
    return roll, pitch, yaw_rate, acc


def acceleration(
    state: VehicleState, cmd, params: PlantParams, dt: float
) -> np.ndarray:
    """Net inertial acceleration over the upcoming step.

    Uses the post-lag attitude so it matches exactly what ``step`` applies;
    this is also what the simulated IMU reports.
    """
    return _dynamics(state, cmd, params, dt)[3]


def step(state: VehicleState, cmd, params: PlantParams, dt: float) -> VehicleState:
    """Advance the plant by one step of at most 10 ms."""
    if not 0.0 < dt <= 0.01:
        raise ValueError(f"plant step dt must be in (0, 0.01], got {dt}")
    roll, pitch, yaw_rate, acc = _dynamics(state, cmd, params, dt)
    velocity = state.velocity + acc * dt
    position = state.position + velocity * dt
    return VehicleState(
        position=position,
        velocity=velocity,
        roll=roll,
        pitch=pitch,
        yaw=state.yaw + yaw_rate * dt,
        yaw_rate=yaw_rate,
        time=state.time + dt,
    )
