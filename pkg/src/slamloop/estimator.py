"""Discrete Kalman filter fusing SLAM position and IMU acceleration.

Nine states, an independent (position, velocity, acceleration) triplet per
axis, propagated with a constant-acceleration model. Position and
acceleration are measured; velocity is never measured and is recovered
through the model coupling. The velocity rows of the observation matrix
are identically zero, which forces the corresponding Kalman-gain columns
to zero, so any value in a measurement's velocity slots is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .pose_sources import AccelMeasurement, PoseMeasurement

STATE_LABELS = ("x", "vx", "ax", "y", "vy", "ay", "z", "vz", "az")

POS_IDX = np.array([0, 3, 6])
VEL_IDX = np.array([1, 4, 7])
ACC_IDX = np.array([2, 5, 8])

# Variance floor keeping R positive definite for noiseless sensor configs.
R_FLOOR = 1e-8

_EYE9 = np.eye(9)


class EstimatorError(ValueError):
    """Invalid filter configuration or a numerically unusable update."""


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def _block_diag9(values, name: str) -> np.ndarray:
    """Expand a per-block triplet (or full 9-vector) to a 9-entry diagonal."""
    arr = np.asarray(values, dtype=float)
    if arr.shape == (3,):
        arr = np.tile(arr, 3)
    if arr.shape != (9,):
        raise EstimatorError(f"{name} must have 3 (per block) or 9 entries")
    return arr


def axis_transition(ts: float) -> np.ndarray:
    """Single-axis constant-acceleration transition block."""
    return np.array(
        [[1.0, ts, 0.5 * ts * ts], [0.0, 1.0, ts], [0.0, 0.0, 1.0]]
    )


def transition_matrix(ts: float) -> np.ndarray:
    return np.kron(np.eye(3), axis_transition(ts))


def observation_matrix() -> np.ndarray:
    b = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    return np.kron(np.eye(3), b)


@dataclass(frozen=True)
class TransitionModel:
    """Transition matrix and process noise for one prediction period."""

    ts: float
    f: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        if not self.ts > 0:
            raise EstimatorError("sample time must be positive")
        if self.f.shape != (9, 9) or self.q.shape != (9, 9):
            raise EstimatorError("transition model matrices must be 9x9")
        if not np.array_equal(self.f, transition_matrix(self.ts)):
            raise EstimatorError("transition matrix inconsistent with sample time")
        if (np.diag(self.q) <= 0).any():
            raise EstimatorError("process noise diagonal must be positive")

    @classmethod
    def from_period(cls, ts: float, q_diag=(1e-4, 1e-3, 1e-2)) -> "TransitionModel":
        if not ts > 0:
            raise EstimatorError("sample time must be positive")
        return cls(ts=ts, f=transition_matrix(ts), q=np.diag(_block_diag9(q_diag, "q_diag")))


@dataclass(frozen=True)
class ObservationModel:
    """Observation matrix (zero velocity rows) and measurement noise."""

    h: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        if self.h.shape != (9, 9) or self.r.shape != (9, 9):
            raise EstimatorError("observation model matrices must be 9x9")
        if not np.array_equal(self.h, observation_matrix()):
            raise EstimatorError("observation matrix must select position and acceleration")
        if (np.diag(self.r) <= 0).any():
            raise EstimatorError("measurement noise diagonal must be positive")

    @classmethod
    def from_noise(cls, r_pos, r_acc) -> "ObservationModel":
        """Build R from position / acceleration measurement variances.

        Each argument is a scalar or per-axis triple, floored at ``R_FLOOR``
        so noiseless sensor configs stay invertible. Velocity slots get a
        unit placeholder variance; the zero rows of H make them
        unreachable, so the value never matters.
        """
        diag = np.ones(9)
        diag[POS_IDX] = np.maximum(np.broadcast_to(r_pos, 3), R_FLOOR)
        diag[ACC_IDX] = np.maximum(np.broadcast_to(r_acc, 3), R_FLOOR)
        return cls(h=observation_matrix(), r=np.diag(diag))

    def with_inflated(self, idx: np.ndarray, factor: float) -> "ObservationModel":
        r = self.r.copy()
        r[idx, idx] *= factor
        return ObservationModel(h=self.h, r=r)


def measurement_vector(position, acceleration) -> np.ndarray:
    """Pack SLAM position and IMU acceleration into state ordering."""
    z = np.zeros(9)
    z[POS_IDX] = position
    z[ACC_IDX] = acceleration
    return z


def predict(
    state: np.ndarray, cov: np.ndarray, model: TransitionModel
) -> tuple[np.ndarray, np.ndarray]:
    """One prediction step: propagate the state and inflate the covariance."""
    if not (np.isfinite(state).all() and np.isfinite(cov).all()):
        raise EstimatorError("non-finite state or covariance passed to predict")
    new_state = model.f @ state
    new_cov = _symmetrize(model.f @ cov @ model.f.T + model.q)
    return new_state, new_cov


def kalman_gain(cov: np.ndarray, obs: ObservationModel) -> np.ndarray:
    """Gain for one correction; columns at the zero H rows are exactly zero."""
    s = obs.h @ cov @ obs.h.T + obs.r
    try:
        # K = P H^T S^-1; with symmetric P and S this is solve(S, H P)^T,
        # which keeps the velocity gain columns at exact zeros.
        gain = np.linalg.solve(s, obs.h @ cov).T
    except np.linalg.LinAlgError:
        i = int(np.argmin(np.abs(np.diag(s))))
        raise EstimatorError(
            f"singular innovation covariance at diagonal entry {i} "
            f"({STATE_LABELS[i]}): {s[i, i]:g}"
        ) from None
    return gain


def correct(
    state: np.ndarray, cov: np.ndarray, z: np.ndarray, obs: ObservationModel
) -> tuple[np.ndarray, np.ndarray]:
    """One correction step; a non-finite measurement is dropped (prior returned)."""
    if not np.isfinite(z).all():
        return state, cov
    gain = kalman_gain(cov, obs)
    new_state = state + gain @ (z - obs.h @ state)
    new_cov = _symmetrize((_EYE9 - gain @ obs.h) @ cov)
    return new_state, new_cov


@njit(cache=True)
def _fuse_kernel(state, cov, f, q, h, r, z, do_correct):
    """Hot path used by the real-time loop: one predict, optional correct.

    Same arithmetic as ``predict`` + ``correct``; pinned to them by an
    equivalence test. Compiled because it runs a few hundred times per
    simulated second.
    """
    state1 = f @ state
    c = f @ cov @ f.T + q
    cov1 = 0.5 * (c + c.T)
    if do_correct:
        hp = h @ cov1
        s = hp @ h.T + r
        gain = np.linalg.solve(s, hp).T
        state1 = state1 + gain @ (z - h @ state1)
        c2 = cov1 - gain @ hp
        cov1 = 0.5 * (c2 + c2.T)
    return state1, cov1


@dataclass
class FilterConfig:
    """Tuning knobs for one filter instance.

    ``q_diag`` and ``prior_diag`` take either a (pos, vel, acc) triplet
    applied to each axis block or a full 9-vector. ``r_pos`` / ``r_acc``
    are measurement variances, normally derived from the sensor profile
    and IMU noise. ``hold_factor`` inflates the position (or acceleration)
    measurement variance on ticks where that sensor produced nothing, so a
    stale value cannot corrupt the estimate.
    """

    imu_rate: float = 200.0
    q_diag: tuple = (1e-4, 1e-3, 1e-2)
    r_pos: float = 4e-4
    r_acc: float = 1e-2
    prior_diag: tuple = (1e-2, 1.0, 1.0)
    hold_factor: float = 1e9

    def __post_init__(self):
        if self.imu_rate <= 0:
            raise EstimatorError("imu_rate must be positive")
        if self.hold_factor < 1e6:
            raise EstimatorError("hold_factor must be at least 1e6")


class DkfFilter:
    """Multi-rate fusion driven at the IMU period.

    Every ``fuse_step`` call performs exactly one prediction. A correction
    runs only when at least one measurement is present; the missing
    sensor's variance is inflated by the hold factor and its slots are
    filled with the last seen value. Out-of-order messages are dropped and
    counted, never applied retroactively. Yaw is passed through from the
    pose source unfiltered.
    """

    def __init__(
        self,
        model: TransitionModel,
        obs: ObservationModel,
        state: np.ndarray,
        cov: np.ndarray,
        hold_factor: float = 1e9,
        start_time: float = 0.0,
    ):
        self.model = model
        self._obs_full = obs
        self._obs_no_pose = obs.with_inflated(POS_IDX, hold_factor)
        self._obs_no_accel = obs.with_inflated(ACC_IDX, hold_factor)
        self.state = np.asarray(state, dtype=float).copy()
        self.cov = _symmetrize(np.asarray(cov, dtype=float))
        self.time = start_time
        self.yaw = 0.0
        self._last_pose = self.state[POS_IDX].copy()
        self._last_accel = np.zeros(3)
        self._last_pose_t = -np.inf
        self._last_accel_t = -np.inf
        self.drops = {
            "pose_out_of_order": 0,
            "pose_nonfinite": 0,
            "accel_out_of_order": 0,
            "accel_nonfinite": 0,
        }

    @classmethod
    def initialize(cls, pose0: PoseMeasurement, cfg: FilterConfig) -> "DkfFilter":
        """Start the filter from a first pose: derivatives zero, diagonal prior."""
        if not np.isfinite(pose0.position).all():
            raise EstimatorError("initial pose must be finite")
        state = np.zeros(9)
        state[POS_IDX] = pose0.position
        cov = np.diag(_block_diag9(cfg.prior_diag, "prior_diag"))
        model = TransitionModel.from_period(1.0 / cfg.imu_rate, cfg.q_diag)
        obs = ObservationModel.from_noise(cfg.r_pos, cfg.r_acc)
        filt = cls(model, obs, state, cov, cfg.hold_factor, start_time=pose0.timestamp)
        filt.yaw = pose0.yaw
        filt._last_pose_t = pose0.timestamp
        return filt

    def fuse_step(
        self,
        pose: PoseMeasurement | None = None,
        accel: AccelMeasurement | None = None,
    ) -> np.ndarray:
        """Advance one filter period; returns a copy of the posterior state."""
        pose = self._admit_pose(pose)
        accel = self._admit_accel(accel)

        do_correct = pose is not None or accel is not None
        if pose is not None:
            self._last_pose = pose.position
            self._last_pose_t = pose.timestamp
            self.yaw = pose.yaw
        if accel is not None:
            self._last_accel = accel.acceleration
            self._last_accel_t = accel.timestamp
        if pose is not None and accel is not None:
            obs = self._obs_full
        elif pose is not None:
            obs = self._obs_no_accel
        else:
            obs = self._obs_no_pose
        z = measurement_vector(self._last_pose, self._last_accel)

        self.state, self.cov = _fuse_kernel(
            self.state, self.cov, self.model.f, self.model.q,
            obs.h, obs.r, z, do_correct,
        )
        self.time += self.model.ts
        return self.state.copy()

    def _admit_pose(self, pose: PoseMeasurement | None) -> PoseMeasurement | None:
        if pose is None:
            return None
        if not np.isfinite(pose.position).all():
            self.drops["pose_nonfinite"] += 1
            return None
        if pose.timestamp <= self._last_pose_t:
            self.drops["pose_out_of_order"] += 1
            return None
        return pose

    def _admit_accel(self, accel: AccelMeasurement | None) -> AccelMeasurement | None:
        if accel is None:
            return None
        if not np.isfinite(accel.acceleration).all():
            self.drops["accel_nonfinite"] += 1
            return None
        if accel.timestamp <= self._last_accel_t:
            self.drops["accel_out_of_order"] += 1
            return None
        return accel

    @property
    def position(self) -> np.ndarray:
        return self.state[POS_IDX].copy()

    @property
    def velocity(self) -> np.ndarray:
        return self.state[VEL_IDX].copy()

    @property
    def acceleration(self) -> np.ndarray:
        return self.state[ACC_IDX].copy()

    @property
    def cov_diagonal(self) -> np.ndarray:
        return np.diag(self.cov).copy()
