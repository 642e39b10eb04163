import numpy as np
import pytest

from slamloop.estimator import (
    ACC_IDX,
    POS_IDX,
    VEL_IDX,
    DkfFilter,
    EstimatorError,
    FilterConfig,
    ObservationModel,
    TransitionModel,
    _fuse_kernel,
    correct,
    kalman_gain,
    measurement_vector,
    observation_matrix,
    predict,
)
from slamloop.pose_sources import AccelMeasurement, PoseMeasurement


def random_psd(rng, scale=1.0):
    a = rng.normal(size=(9, 9)) * scale
    return a @ a.T


def unit_obs(r=None):
    return ObservationModel(h=observation_matrix(), r=np.eye(9) if r is None else r)


class TestTransitionModel:
    def test_block_structure(self):
        m = TransitionModel.from_period(0.02)
        a = m.f[:3, :3]
        expected = np.array([[1.0, 0.02, 0.0002], [0.0, 1.0, 0.02], [0.0, 0.0, 1.0]])
        assert np.allclose(a, expected)
        assert np.allclose(m.f[3:6, 3:6], a)
        assert np.allclose(m.f[6:9, 6:9], a)
        assert np.count_nonzero(m.f[:3, 3:]) == 0

    def test_rejects_nonpositive_ts(self):
        with pytest.raises(EstimatorError):
            TransitionModel.from_period(0.0)
        with pytest.raises(EstimatorError):
            TransitionModel.from_period(-0.01)

    def test_rejects_nonpositive_q(self):
        with pytest.raises(EstimatorError):
            TransitionModel.from_period(0.01, q_diag=(0.0, 1e-3, 1e-2))


class TestObservationModel:
    def test_velocity_rows_zero(self):
        obs = ObservationModel.from_noise(1e-4, 1e-2)
        assert np.count_nonzero(obs.h[VEL_IDX]) == 0
        assert np.count_nonzero(obs.h) == 6

    def test_r_floor(self):
        obs = ObservationModel.from_noise(0.0, 0.0)
        assert (np.diag(obs.r) > 0).all()

    def test_per_axis_variances(self):
        obs = ObservationModel.from_noise((1e-4, 2e-4, 3e-4), 1e-2)
        assert np.allclose(np.diag(obs.r)[POS_IDX], [1e-4, 2e-4, 3e-4])


class TestPredict:
    def test_zero_fixed_point(self):
        m = TransitionModel.from_period(0.05)
        state, cov = predict(np.zeros(9), np.eye(9), m)
        assert np.array_equal(state, np.zeros(9))

    def test_position_velocity_kinematics(self):
        m = TransitionModel.from_period(0.02)
        state = np.zeros(9)
        state[0], state[1] = 1.0, 1.0
        new_state, _ = predict(state, np.eye(9), m)
        assert new_state[0] == pytest.approx(1.02, abs=1e-15)
        assert new_state[1] == pytest.approx(1.0, abs=1e-15)
        assert new_state[2] == 0.0
        assert np.count_nonzero(new_state[3:]) == 0

    def test_half_ts_squared_term(self):
        m = TransitionModel.from_period(0.1)
        state = np.zeros(9)
        state[2] = 1.0
        new_state, _ = predict(state, np.eye(9), m)
        assert new_state[0] == pytest.approx(0.005, abs=1e-15)
        assert new_state[1] == pytest.approx(0.1, abs=1e-15)
        assert new_state[2] == 1.0

    def test_covariance_grows_by_q(self):
        m = TransitionModel.from_period(0.01)
        _, cov = predict(np.zeros(9), np.zeros((9, 9)), m)
        assert np.allclose(cov, m.q)

    def test_rejects_nonfinite(self):
        m = TransitionModel.from_period(0.01)
        bad = np.zeros(9)
        bad[4] = np.nan
        with pytest.raises(EstimatorError, match="non-finite"):
            predict(bad, np.eye(9), m)


class TestCorrect:
    def test_identity_prior_halves_innovation(self):
        # Hand oracle: P = I, R = I, measured row -> S = 2, K = 1/2.
        z = np.zeros(9)
        z[0] = 1.0
        state, cov = correct(np.zeros(9), np.eye(9), z, unit_obs())
        assert state[0] == pytest.approx(0.5, abs=1e-12)
        assert np.count_nonzero(state[1:]) == 0

    def test_velocity_slots_never_matter(self):
        rng = np.random.default_rng(3)
        cov = random_psd(rng)
        state = rng.normal(size=9)
        z = measurement_vector(rng.normal(size=3), rng.normal(size=3))
        z_dirty = z.copy()
        z_dirty[VEL_IDX] = [99.0, -7.0, 1234.5]
        obs = unit_obs()
        s_clean, c_clean = correct(state, cov, z, obs)
        s_dirty, c_dirty = correct(state, cov, z_dirty, obs)
        assert np.array_equal(s_clean, s_dirty)
        assert np.array_equal(c_clean, c_dirty)

    def test_zero_innovation_keeps_state(self):
        rng = np.random.default_rng(4)
        state = rng.normal(size=9)
        z = measurement_vector(state[POS_IDX], state[ACC_IDX])
        new_state, _ = correct(state, random_psd(rng), z, unit_obs())
        assert np.allclose(new_state, state, atol=1e-12)

    def test_nonfinite_measurement_returns_prior(self):
        state = np.ones(9)
        cov = np.eye(9)
        z = measurement_vector([1.0, np.nan, 0.0], [0.0, 0.0, 0.0])
        s2, c2 = correct(state, cov, z, unit_obs())
        assert np.array_equal(s2, state)
        assert np.array_equal(c2, cov)

    def test_singular_innovation_names_entry(self):
        r = np.eye(9)
        r[3, 3] = 0.0
        obs = ObservationModel.__new__(ObservationModel)
        object.__setattr__(obs, "h", observation_matrix())
        object.__setattr__(obs, "r", r)
        cov = np.zeros((9, 9))
        with pytest.raises(EstimatorError, match=r"diagonal entry 3 \(y\)"):
            kalman_gain(cov, obs)


class TestGainNullity:
    def test_zero_columns_over_random_psd(self):
        rng = np.random.default_rng(7)
        h = observation_matrix()
        for _ in range(300):
            cov = random_psd(rng, scale=rng.uniform(0.01, 50.0))
            r = np.diag(rng.uniform(1e-6, 10.0, size=9))
            obs = ObservationModel(h=h, r=r)
            gain = kalman_gain(cov, obs)
            assert np.abs(gain[:, VEL_IDX]).max() <= 1e-14


class TestFuseKernelEquivalence:
    def test_kernel_matches_public_ops(self):
        rng = np.random.default_rng(11)
        model = TransitionModel.from_period(0.005)
        obs = ObservationModel.from_noise(4e-4, 1e-2)
        state = rng.normal(size=9)
        cov = random_psd(rng)
        for i in range(50):
            do_correct = i % 3 != 0
            z = measurement_vector(rng.normal(size=3), rng.normal(size=3))
            ref_state, ref_cov = predict(state, cov, model)
            if do_correct:
                ref_state, ref_cov = correct(ref_state, ref_cov, z, obs)
            state, cov = _fuse_kernel(
                state, cov, model.f, model.q, obs.h, obs.r, z, do_correct
            )
            np.testing.assert_allclose(state, ref_state, rtol=1e-11, atol=1e-12)
            np.testing.assert_allclose(cov, ref_cov, rtol=1e-10, atol=1e-13)


class TestInitialize:
    def test_zero_pose(self):
        filt = DkfFilter.initialize(PoseMeasurement(0.0, np.zeros(3), 0.0), FilterConfig())
        assert np.array_equal(filt.state, np.zeros(9))

    def test_positions_from_pose(self):
        filt = DkfFilter.initialize(
            PoseMeasurement(0.0, [1.0, 2.0, 3.0], 0.3), FilterConfig()
        )
        assert np.array_equal(filt.position, [1.0, 2.0, 3.0])
        assert np.count_nonzero(filt.velocity) == 0
        assert np.count_nonzero(filt.acceleration) == 0
        assert filt.yaw == 0.3

    def test_zero_position_prior_freezes_positions(self):
        cfg = FilterConfig(prior_diag=(0.0, 1.0, 1.0))
        filt = DkfFilter.initialize(PoseMeasurement(0.0, [1.0, 2.0, 3.0], 0.0), cfg)
        z = measurement_vector([5.0, 5.0, 5.0], [0.0, 0.0, 0.0])
        state, _ = correct(filt.state, filt.cov, z, filt._obs_full)
        assert np.allclose(state[POS_IDX], [1.0, 2.0, 3.0], atol=1e-12)

    def test_nonfinite_pose_rejected(self):
        with pytest.raises(EstimatorError):
            DkfFilter.initialize(
                PoseMeasurement(0.0, [np.inf, 0.0, 0.0], 0.0), FilterConfig()
            )

    def test_hold_factor_must_protect(self):
        with pytest.raises(EstimatorError):
            FilterConfig(hold_factor=10.0)


def make_filter(r_pos=1e-8, r_acc=1e-8, **kwargs):
    cfg = FilterConfig(imu_rate=200.0, r_pos=r_pos, r_acc=r_acc, **kwargs)
    return DkfFilter.initialize(PoseMeasurement(0.0, np.zeros(3), 0.0), cfg), cfg


class TestFuseStep:
    dt = 1.0 / 200.0

    def test_noiseless_constant_state_converges(self):
        filt, _ = make_filter()
        target = np.array([1.0, -2.0, 0.5])
        est = filt.state
        for k in range(1, 1001):
            t = k * self.dt
            pose = PoseMeasurement(t, target, 0.0) if k % 4 == 0 else None
            est = filt.fuse_step(pose, AccelMeasurement(t, np.zeros(3)))
        assert np.abs(est[POS_IDX] - target).max() < 1e-6

    def test_predict_only_inflates_position_covariance(self):
        filt, _ = make_filter()
        diag_prev = filt.cov_diagonal[POS_IDX]
        for _ in range(50):
            filt.fuse_step(None, None)
            diag = filt.cov_diagonal[POS_IDX]
            assert (diag >= diag_prev - 1e-15).all()
            diag_prev = diag

    def test_lower_pose_rate_has_larger_steady_covariance(self):
        def steady_trace(every):
            filt, _ = make_filter(r_pos=4e-4, r_acc=1e-2)
            for k in range(1, 4001):
                t = k * self.dt
                pose = PoseMeasurement(t, np.zeros(3), 0.0) if k % every == 0 else None
                filt.fuse_step(pose, AccelMeasurement(t, np.zeros(3)))
            return filt.cov_diagonal[POS_IDX].sum()

        assert steady_trace(10) >= steady_trace(4)  # 20 Hz vs 50 Hz

    def test_out_of_order_pose_dropped(self):
        filt, _ = make_filter()
        filt.fuse_step(PoseMeasurement(0.02, np.ones(3), 0.0), None)
        before = filt.state.copy()
        filt.fuse_step(PoseMeasurement(0.01, 100.0 * np.ones(3), 0.0), None)
        assert filt.drops["pose_out_of_order"] == 1
        # the stale message never touched the estimate beyond its own predict
        assert np.abs(filt.position - before[POS_IDX]).max() < 0.1

    def test_nonfinite_pose_dropped_and_counted(self):
        filt, _ = make_filter()
        est = filt.fuse_step(PoseMeasurement(0.01, [np.nan, 0, 0], 0.0), None)
        assert filt.drops["pose_nonfinite"] == 1
        assert np.isfinite(est).all()

    def test_accel_only_hold_keeps_position_pinned(self):
        # With position variance inflated while the pose is stale, pure
        # acceleration updates cannot drag the position estimate away.
        filt, _ = make_filter(r_pos=4e-4, r_acc=1e-2)
        filt.fuse_step(PoseMeasurement(0.005, np.zeros(3), 0.0),
                       AccelMeasurement(0.005, np.zeros(3)))
        for k in range(2, 100):
            t = k * self.dt
            filt.fuse_step(None, AccelMeasurement(t, np.zeros(3)))
        assert np.abs(filt.position).max() < 1e-6

    def test_exactly_one_predict_per_call(self):
        filt, _ = make_filter()
        t0 = filt.time
        filt.fuse_step(None, None)
        assert filt.time == pytest.approx(t0 + self.dt)

    def test_estimate_finite_under_long_random_schedule(self):
        rng = np.random.default_rng(21)
        filt, _ = make_filter(r_pos=1e-4, r_acc=1e-2)
        for k in range(1, 10_001):
            t = k * self.dt
            pose = None
            if rng.random() < 0.25:
                pose = PoseMeasurement(t, rng.normal(size=3), 0.0)
            accel = None
            if rng.random() < 0.9:
                accel = AccelMeasurement(t, rng.normal(size=3))
            filt.fuse_step(pose, accel)
        eigvals = np.linalg.eigvalsh(filt.cov)
        assert eigvals.min() >= -1e-9
        assert np.abs(filt.cov - filt.cov.T).max() < 1e-9 * max(1.0, np.abs(filt.cov).max())


class TestInvariants:
    def test_covariance_symmetry_and_psd_random_schedule(self):
        rng = np.random.default_rng(5)
        model = TransitionModel.from_period(0.005)
        obs = ObservationModel.from_noise(1e-4, 1e-2)
        state = np.zeros(9)
        cov = np.diag(rng.uniform(0.1, 2.0, 9))
        for k in range(10_000):
            state, cov = predict(state, cov, model)
            if rng.random() < 0.3:
                z = measurement_vector(rng.normal(size=3), rng.normal(size=3))
                state, cov = correct(state, cov, z, obs)
        assert np.abs(cov - cov.T).max() < 1e-9 * np.abs(cov).max()
        assert np.linalg.eigvalsh(cov).min() >= -1e-9

    def test_block_decoupling(self):
        # Diagonal Q/R and block-diagonal P: y measurements never move x.
        rng = np.random.default_rng(6)
        model = TransitionModel.from_period(0.01)
        obs = ObservationModel.from_noise(1e-4, 1e-2)
        state = np.zeros(9)
        cov = np.diag(np.tile([0.1, 1.0, 1.0], 3))
        x_block_a, x_block_b = None, None
        for perturb in (0.0, 5.0):
            s, c = state.copy(), cov.copy()
            for k in range(200):
                s, c = predict(s, c, model)
                z = measurement_vector([1.0, 2.0 + perturb, 3.0], [0.1, 0.2, 0.3])
                s, c = correct(s, c, z, obs)
            if perturb == 0.0:
                x_block_a = s[:3].copy()
            else:
                x_block_b = s[:3].copy()
        assert np.array_equal(x_block_a, x_block_b)

    def test_velocity_observability_on_ramp(self):
        filt = DkfFilter.initialize(
            PoseMeasurement(0.0, np.zeros(3), 0.0),
            FilterConfig(imu_rate=200.0, r_pos=1e-8, r_acc=1e-8),
        )
        slope = np.array([0.5, -1.0, 0.25])
        dt = 1.0 / 200.0
        est = filt.state
        for k in range(1, 601):
            t = k * dt
            pose = PoseMeasurement(t, slope * t, 0.0) if k % 4 == 0 else None
            est = filt.fuse_step(pose, AccelMeasurement(t, np.zeros(3)))
        rel = np.abs((est[VEL_IDX] - slope) / slope)
        assert rel.max() < 0.02

    def test_noiseless_constant_acceleration_tracking(self):
        cfg = FilterConfig(imu_rate=200.0, r_pos=1e-8, r_acc=1e-8)
        p0 = np.array([1.0, 2.0, 3.0])
        v0 = np.array([0.3, 0.0, -0.1])
        a_true = np.array([0.1, -0.2, 0.05])
        filt = DkfFilter.initialize(PoseMeasurement(0.0, p0, 0.0), cfg)
        dt = 1.0 / 200.0
        est = filt.state
        for k in range(1, 1001):
            t = k * dt
            pos_t = p0 + v0 * t + 0.5 * a_true * t * t
            pose = PoseMeasurement(t, pos_t, 0.0) if k % 4 == 0 else None
            est = filt.fuse_step(pose, AccelMeasurement(t, a_true))
        pos_t = p0 + v0 * 5.0 + 0.5 * a_true * 25.0
        vel_t = v0 + a_true * 5.0
        assert np.abs(est[POS_IDX] - pos_t).max() < 1e-6
        assert np.abs(est[VEL_IDX] - vel_t).max() < 1e-6
