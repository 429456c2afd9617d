import numpy as np
import pytest

from wheelquad.robot_model import RobotConfig
from wheelquad.simulator import (BASE_CONTACT, GRAVITY, RUNNING, SIM_DT,
                                 TIMEOUT, DisturbanceSchedule, SimState,
                                 SimulationDiverged, TerrainModel, apply_push,
                                 check_termination, collision_count,
                                 pd_leg_torque, pid_wheel_torque,
                                 quat_integrate, quat_rotate,
                                 quat_rotate_inverse, quat_to_mat, step,
                                 tilt_angle, wheel_contact_points,
                                 yaw_rate_cw)


@pytest.fixture(scope="module")
def cfg():
    return RobotConfig.default()


@pytest.fixture(scope="module")
def terrain():
    return TerrainModel()


def hold_pose(state):
    """Command the current pose so actuators only fight gravity."""
    return state.q[:, :12].copy(), np.zeros((state.n, 4))


class TestQuaternions:
    def test_rotate_round_trip(self):
        rng = np.random.default_rng(31)
        q = rng.normal(size=(20, 4))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        v = rng.normal(size=(20, 3))
        back = quat_rotate_inverse(q, quat_rotate(q, v))
        assert np.allclose(back, v, atol=1e-12)

    def test_mat_agrees_with_rotate(self):
        rng = np.random.default_rng(37)
        q = rng.normal(size=(10, 4))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        v = rng.normal(size=(10, 3))
        via_mat = np.einsum("nij,nj->ni", quat_to_mat(q), v)
        assert np.allclose(via_mat, quat_rotate(q, v), atol=1e-12)

    def test_integrate_preserves_norm(self):
        q = np.tile([1.0, 0.0, 0.0, 0.0], (3, 1))
        omega = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 10.0], [0.0, 0.0, 0.0]])
        for _ in range(2000):
            q = quat_integrate(q, omega, 1e-3)
        assert np.allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-9)

    def test_yaw_rate_sign_convention(self, cfg):
        # positive world z spin is counter-clockwise from above, so the
        # clockwise-positive readout must be its negative
        state = SimState.standing(cfg, n=1)
        state.base_ang_vel[0] = [0.0, 0.0, 0.4]
        assert abs(yaw_rate_cw(state)[0] + 0.4) <= 1e-12

    def test_tilt_angle_level_and_rolled(self, cfg):
        state = SimState.standing(cfg, n=2)
        half = 0.3 / 2
        state.base_quat[1] = [np.cos(half), np.sin(half), 0.0, 0.0]
        tilt = tilt_angle(state)
        assert abs(tilt[0]) <= 1e-12
        assert abs(tilt[1] - 0.3) <= 1e-9


class TestActuators:
    def test_pd_formula(self, cfg):
        q = np.zeros((1, 12))
        qd = np.zeros((1, 12))
        q_des = np.full((1, 12), 0.1)
        tau = pd_leg_torque(q_des, q, qd, cfg)
        assert np.allclose(tau, cfg.pd_gains[:, 0] * 0.1)

    def test_pd_damping_and_clamp(self, cfg):
        qd = np.full((1, 12), 100.0)
        tau = pd_leg_torque(np.zeros((1, 12)), np.zeros((1, 12)), qd, cfg)
        assert np.all(tau == -cfg.leg_torque_limit)

    def test_pid_integral_accumulates(self, cfg):
        integral = np.zeros((1, 4))
        prev = np.zeros((1, 4))
        v_des = np.full((1, 4), 2.0)
        tau, integral, error = pid_wheel_torque(
            v_des, np.zeros((1, 4)), integral, prev, cfg, dt=1e-3)
        assert np.allclose(error, 2.0)
        assert np.allclose(integral, 2.0 * 1e-3)
        kp, ki = cfg.pid_gains[:, 0], cfg.pid_gains[:, 1]
        assert np.allclose(tau, kp * 2.0 + ki * integral)

    def test_pid_anti_windup(self, cfg):
        integral = np.zeros((1, 4))
        prev = np.zeros((1, 4))
        v_des = np.full((1, 4), 50.0)
        for _ in range(5000):
            _, integral, prev = pid_wheel_torque(
                v_des, np.zeros((1, 4)), integral, prev, cfg, dt=1e-3)
        assert np.all(integral <= cfg.pid_integral_limit + 1e-12)

    def test_pid_torque_clamped(self, cfg):
        tau, _, _ = pid_wheel_torque(
            np.full((1, 4), 1e6), np.zeros((1, 4)), np.zeros((1, 4)),
            np.zeros((1, 4)), cfg, dt=1e-3)
        assert np.all(tau == cfg.wheel_torque_limit)


class TestDynamics:
    def test_free_fall_velocity(self, cfg, terrain):
        state = SimState.standing(cfg, n=1)
        state.base_pos[:, 2] = 5.0
        k = 50
        for _ in range(k):
            q_des, v_des = hold_pose(state)
            state, _ = step(state, q_des, v_des, terrain, cfg)
        assert abs(state.base_lin_vel[0, 2] + GRAVITY * k * SIM_DT) <= 1e-9
        assert not state.contact.any()

    def test_standing_settles(self, cfg, terrain):
        state = SimState.standing(cfg, n=1)
        q_hold = state.q[:, :12].copy()
        for _ in range(1000):
            state, diag = step(state, q_hold, np.zeros((1, 4)), terrain, cfg)
        assert state.contact.all()
        height = state.base_pos[0, 2]
        assert abs(height - cfg.nominal_body_height) < 0.1 * cfg.nominal_body_height
        assert tilt_angle(state)[0] < np.deg2rad(5.0)
        weight = cfg.base_mass * GRAVITY
        assert abs(diag.contact_forces[0, :, 2].sum() - weight) / weight < 0.05

    def test_friction_cone_invariant(self, cfg, terrain):
        rng = np.random.default_rng(41)
        state = SimState.standing(cfg, n=4)
        state.base_lin_vel[:, :2] = rng.uniform(-0.5, 0.5, size=(4, 2))
        q_hold = state.q[:, :12].copy()
        for i in range(600):
            v_des = rng.uniform(-15.0, 15.0, size=(4, 4)) if i % 50 == 0 \
                else v_des
            state, diag = step(state, q_hold, v_des, terrain, cfg)
            f = diag.contact_forces
            f_n = f[..., 2]
            f_t = np.linalg.norm(f[..., :2], axis=-1)
            assert np.all(f_t <= terrain.mu_lat * np.maximum(f_n, 0.0) + 1e-9)
            assert np.all(f_n >= -1e-12)

    def test_rolling_moves_forward(self, cfg, terrain):
        state = SimState.standing(cfg, n=1)
        q_hold = state.q[:, :12].copy()
        for _ in range(500):
            state, _ = step(state, q_hold, np.zeros((1, 4)), terrain, cfg)
        v_des = np.full((1, 4), -10.0)
        for _ in range(1500):
            state, _ = step(state, q_hold, v_des, terrain, cfg)
        # negative wheel speed rolls the robot toward +x
        assert state.base_pos[0, 0] > 0.2
        assert state.base_lin_vel[0, 0] > 0.3

    def test_time_advances(self, cfg, terrain):
        state = SimState.standing(cfg, n=2)
        for _ in range(100):
            q_des, v_des = hold_pose(state)
            state, _ = step(state, q_des, v_des, terrain, cfg)
        assert np.allclose(state.time, 100 * SIM_DT)

    def test_divergence_raises_with_last_state(self, cfg, terrain):
        state = SimState.standing(cfg, n=1)
        state.base_lin_vel[0, 0] = np.nan
        with pytest.raises(SimulationDiverged) as exc:
            for _ in range(10):
                q_des, v_des = hold_pose(state)
                state, _ = step(state, q_des, v_des, terrain, cfg)
        assert exc.value.last_state is not None


class TestGeometryQueries:
    def test_contact_points_below_centers(self, cfg):
        state = SimState.standing(cfg, n=1)
        pts = wheel_contact_points(state, cfg)
        assert pts.shape == (1, 4, 3)
        assert np.allclose(pts[0, :, 2], 0.0, atol=1e-9)

    def test_collision_count_zero_standing(self, cfg):
        state = SimState.standing(cfg, n=1)
        assert collision_count(state, cfg)[0] == 0

    def test_collision_count_buried_base(self, cfg):
        state = SimState.standing(cfg, n=1)
        state.base_pos[0, 2] = 0.01
        assert collision_count(state, cfg)[0] > 0


class TestTermination:
    def test_running(self, cfg):
        state = SimState.standing(cfg, n=1)
        assert check_termination(state, cfg)[0] == RUNNING

    def test_timeout(self, cfg):
        state = SimState.standing(cfg, n=1)
        state.time[:] = 20.0
        assert check_termination(state, cfg, time_limit=20.0)[0] == TIMEOUT

    def test_base_contact(self, cfg):
        state = SimState.standing(cfg, n=1)
        state.base_pos[0, 2] = 0.02
        assert check_termination(state, cfg)[0] == BASE_CONTACT

    def test_fall_beats_timeout(self, cfg):
        state = SimState.standing(cfg, n=1)
        state.time[:] = 99.0
        state.base_pos[0, 2] = 0.02
        assert check_termination(state, cfg, time_limit=20.0)[0] == BASE_CONTACT


class TestDisturbances:
    def test_push_magnitude_and_plane(self, cfg):
        state = SimState.standing(cfg, n=64)
        sched = DisturbanceSchedule(interval=1.0, max_push=0.5)
        rng = np.random.default_rng(43)
        pushed, vectors = apply_push(state, sched, rng)
        mags = np.linalg.norm(vectors, axis=-1)
        assert np.all(mags <= 0.5 + 1e-12)
        assert np.allclose(vectors[:, 2], 0.0, atol=1e-12)
        assert np.allclose(pushed.base_lin_vel, state.base_lin_vel + vectors)

    def test_zero_max_push_is_noop(self, cfg):
        state = SimState.standing(cfg, n=8)
        sched = DisturbanceSchedule(interval=1.0, max_push=0.0)
        pushed, vectors = apply_push(state, sched, np.random.default_rng(0))
        assert np.all(vectors == 0.0)
        assert np.array_equal(pushed.base_lin_vel, state.base_lin_vel)

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            DisturbanceSchedule(interval=0.0)
        with pytest.raises(ValueError):
            DisturbanceSchedule(max_push=-1.0)


class TestTerrainValidation:
    def test_friction_ordering(self):
        with pytest.raises(ValueError):
            TerrainModel(mu_roll=0.9, mu_lat=0.8)

    def test_stiffness_positive(self):
        with pytest.raises(ValueError):
            TerrainModel(contact_stiffness=0.0)
