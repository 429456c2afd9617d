"""Reduced-order rigid-body simulator for a wheeled quadruped.

One rigid base (box inertia) carries four massless legs.  Legs track joint
targets through PD torques acting on a small per-joint reflected inertia,
wheels track speed targets through PID torques, and the only external
forces are gravity and wheel-contact forces: a spring-damper normal force
plus anisotropic Coulomb friction, weak along the rolling direction and
strong laterally.  Semi-implicit Euler at 1 kHz.

All state arrays carry a leading batch axis so one call advances any number
of independent robots; batch size 1 is a single robot.

Wheel spin sign convention: negative wheel velocity rolls the robot forward
(pure rolling satisfies vx = -spin * wheel_radius).  Positive commanded yaw
rate turns the robot clockwise viewed from above; `yaw_rate_cw` converts
the world-frame angular velocity into that scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot_model import (LEG_SIDE, RobotConfig, leg_forward_kinematics,
                          leg_jacobians)

GRAVITY = 9.81
SIM_DT = 1e-3
# Below this slip speed friction ramps linearly instead of switching sign,
# which keeps the 1 kHz integration stable.
SLIP_REGULARIZATION = 0.05

RUNNING, BASE_CONTACT, TIMEOUT = 0, 1, 2
TERMINATION_NAMES = ("running", "base_contact", "timeout")


class SimulationDiverged(RuntimeError):
    """Integration produced non-finite values; carries the last finite state."""

    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = last_state


@dataclass
class TerrainModel:
    """Flat ground plus contact material parameters."""

    ground_height: float = 0.0
    contact_stiffness: float = 2.0e4   # N/m
    contact_damping: float = 200.0     # N s/m
    mu_roll: float = 0.05
    mu_lat: float = 0.8
    restitution: float = 0.0           # informational; contact is inelastic

    def __post_init__(self):
        if self.contact_stiffness <= 0 or self.contact_damping < 0:
            raise ValueError("contact stiffness/damping out of range")
        if not (0.0 <= self.mu_roll < self.mu_lat):
            raise ValueError("need 0 <= mu_roll < mu_lat")
        if not (0.0 <= self.restitution <= 1.0):
            raise ValueError("restitution out of range")


@dataclass
class DisturbanceSchedule:
    """Planar velocity pushes applied at a fixed cadence."""

    interval: float = 15.0   # s between pushes
    max_push: float = 0.0    # m/s, magnitude drawn uniformly from [0, max]
    seed: int = 0

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError("interval must be positive")
        if self.max_push < 0:
            raise ValueError("max_push must be non-negative")


@dataclass
class SimState:
    """Batched simulator state; every array has the env count up front."""

    base_pos: np.ndarray       # (n, 3) world
    base_quat: np.ndarray      # (n, 4) w, x, y, z
    base_lin_vel: np.ndarray   # (n, 3) world
    base_ang_vel: np.ndarray   # (n, 3) world
    q: np.ndarray              # (n, 16) 12 leg angles then 4 wheel angles
    qd: np.ndarray             # (n, 16)
    contact: np.ndarray        # (n, 4) bool
    contact_forces: np.ndarray # (n, 4, 3) world
    pid_integral: np.ndarray   # (n, 4)
    pid_prev_error: np.ndarray # (n, 4)
    time: np.ndarray           # (n,) seconds since episode start

    @property
    def n(self):
        return self.base_pos.shape[0]

    def copy(self) -> "SimState":
        return SimState(*(getattr(self, f.name).copy()
                          for f in self.__dataclass_fields__.values()))

    @classmethod
    def standing(cls, cfg: RobotConfig, n: int = 1,
                 ground_height: float = 0.0) -> "SimState":
        from .robot_model import (inverse_kinematics, neutral_stance_targets,
                                  wheel_center_from_contact)
        targets = wheel_center_from_contact(neutral_stance_targets(cfg), cfg)
        q_leg = np.concatenate(
            [inverse_kinematics(leg, targets[leg], cfg).as_array()
             for leg in range(4)])
        q = np.concatenate([q_leg, np.zeros(4)])
        pos = np.array([0.0, 0.0, ground_height + cfg.nominal_body_height])
        return cls(
            base_pos=np.tile(pos, (n, 1)),
            base_quat=np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1)),
            base_lin_vel=np.zeros((n, 3)),
            base_ang_vel=np.zeros((n, 3)),
            q=np.tile(q, (n, 1)),
            qd=np.zeros((n, 16)),
            contact=np.zeros((n, 4), dtype=bool),
            contact_forces=np.zeros((n, 4, 3)),
            pid_integral=np.zeros((n, 4)),
            pid_prev_error=np.zeros((n, 4)),
            time=np.zeros(n),
        )


@dataclass
class StepDiagnostics:
    """Per-substep byproducts consumed by the power meter and the logs."""

    torques: np.ndarray         # (n, 16) applied actuator torques
    contact_forces: np.ndarray  # (n, 4, 3)
    slip: np.ndarray            # (n, 4, 2) rolling and lateral slip speeds
    contact: np.ndarray         # (n, 4) bool


# ---------------------------------------------------------------------------
# Quaternions (w, x, y, z)


def quat_to_mat(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z),
                     2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z),
                     2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x),
                     1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_rotate(q, v):
    return np.einsum("...ij,...j->...i", quat_to_mat(q), v)


def quat_rotate_inverse(q, v):
    return np.einsum("...ji,...j->...i", quat_to_mat(q), v)


def quat_integrate(q, omega_world, dt):
    """First-order quaternion update for a world-frame angular velocity."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ox, oy, oz = omega_world[..., 0], omega_world[..., 1], omega_world[..., 2]
    dq = 0.5 * np.stack([
        -ox * x - oy * y - oz * z,
        ox * w + oy * z - oz * y,
        -ox * z + oy * w + oz * x,
        ox * y - oy * x + oz * w,
    ], axis=-1)
    out = q + dt * dq
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def yaw_rate_cw(state: SimState) -> np.ndarray:
    """Yaw rate with the command convention: positive = clockwise from above."""
    return -state.base_ang_vel[..., 2]


def tilt_angle(state: SimState) -> np.ndarray:
    """Angle between the base z axis and world up, radians.  (n,)."""
    up = quat_rotate(state.base_quat, np.array([0.0, 0.0, 1.0]))
    return np.arccos(np.clip(up[..., 2], -1.0, 1.0))


# ---------------------------------------------------------------------------
# Actuators


def pd_leg_torque(q_des, q, qd, cfg: RobotConfig) -> np.ndarray:
    """PD torques for the 12 leg joints, clamped to the actuator limit."""
    kp = cfg.pd_gains[:, 0]
    kd = cfg.pd_gains[:, 1]
    tau = kp * (q_des - q) - kd * qd
    return np.clip(tau, -cfg.leg_torque_limit, cfg.leg_torque_limit)


def pid_wheel_torque(v_des, wheel_vel, integral, prev_error, cfg: RobotConfig,
                     dt: float = SIM_DT):
    """PID torques for the 4 wheels with anti-windup.

    Returns (torque, new_integral, error); the caller owns the state.
    """
    kp = cfg.pid_gains[:, 0]
    ki = cfg.pid_gains[:, 1]
    kd = cfg.pid_gains[:, 2]
    error = v_des - wheel_vel
    new_integral = np.clip(integral + error * dt,
                           -cfg.pid_integral_limit, cfg.pid_integral_limit)
    tau = kp * error + ki * new_integral + kd * (error - prev_error) / dt
    return (np.clip(tau, -cfg.wheel_torque_limit, cfg.wheel_torque_limit),
            new_integral, error)


# ---------------------------------------------------------------------------
# Contact and integration


def _wheel_kinematics(state: SimState, cfg: RobotConfig):
    """World wheel-center positions and velocities.  (n,4,3) each."""
    n = state.n
    q_leg = state.q[:, :12].reshape(n, 4, 3)
    qd_leg = state.qd[:, :12].reshape(n, 4, 3)
    rot = quat_to_mat(state.base_quat)                       # (n, 3, 3)
    p_hip = leg_forward_kinematics(q_leg, cfg)               # (n, 4, 3)
    r_base = cfg.hip_offsets + p_hip
    r_world = np.einsum("nij,nlj->nli", rot, r_base)
    centers = state.base_pos[:, None, :] + r_world
    jac = leg_jacobians(q_leg, cfg)                          # (n, 4, 3, 3)
    v_joint = np.einsum("nlij,nlj->nli", jac, qd_leg)
    vel = (state.base_lin_vel[:, None, :]
           + np.cross(state.base_ang_vel[:, None, :], r_world)
           + np.einsum("nij,nlj->nli", rot, v_joint))
    return centers, vel, r_world, rot


def wheel_contact_points(state: SimState, cfg: RobotConfig) -> np.ndarray:
    """World positions of the wheel ground-contact points.  (n, 4, 3)."""
    centers, _, _, _ = _wheel_kinematics(state, cfg)
    centers = centers.copy()
    centers[..., 2] -= cfg.wheel_radius
    return centers


def step(state: SimState, q_des_leg, v_des_wheel, terrain: TerrainModel,
         cfg: RobotConfig, dt: float = SIM_DT, gravity: float = GRAVITY):
    """Advance every robot by one substep.  Returns (state', diagnostics)."""
    n = state.n
    q_des_leg = np.asarray(q_des_leg, dtype=float).reshape(n, 12)
    v_des_wheel = np.asarray(v_des_wheel, dtype=float).reshape(n, 4)

    tau_leg = pd_leg_torque(q_des_leg, state.q[:, :12], state.qd[:, :12], cfg)
    tau_wheel, integral, error = pid_wheel_torque(
        v_des_wheel, state.qd[:, 12:], state.pid_integral,
        state.pid_prev_error, cfg, dt)

    centers, vel, r_world, rot = _wheel_kinematics(state, cfg)
    pen = (terrain.ground_height + cfg.wheel_radius) - centers[..., 2]
    contact = pen > 0.0
    pen_rate = -vel[..., 2]
    f_n = np.where(
        contact,
        np.maximum(0.0, terrain.contact_stiffness * pen
                   + terrain.contact_damping * pen_rate),
        0.0)

    # Rolling direction: base x axis flattened onto the ground plane.
    bx = rot[:, :, 0].copy()
    bx[:, 2] = 0.0
    norm = np.linalg.norm(bx, axis=-1, keepdims=True)
    bx = np.where(norm > 1e-9, bx / np.maximum(norm, 1e-12),
                  np.array([1.0, 0.0, 0.0]))
    roll_dir = bx[:, None, :]
    lat_dir = np.stack([-bx[:, 1], bx[:, 0], np.zeros(n)], axis=-1)[:, None, :]

    spin_term = np.cross(state.base_ang_vel,
                         np.array([0.0, 0.0, -cfg.wheel_radius]))
    v_cp = vel + spin_term[:, None, :]
    s_roll = np.sum(v_cp * roll_dir, axis=-1) + state.qd[:, 12:] * cfg.wheel_radius
    s_lat = np.sum(v_cp * lat_dir, axis=-1)

    sat = lambda s: np.clip(s / SLIP_REGULARIZATION, -1.0, 1.0)
    f_roll = -terrain.mu_roll * f_n * sat(s_roll)
    f_lat = -terrain.mu_lat * f_n * sat(s_lat)
    f_t = f_roll[..., None] * roll_dir + f_lat[..., None] * lat_dir
    # Friction cone: tangential magnitude never exceeds mu_lat * normal.
    mag = np.linalg.norm(f_t, axis=-1)
    limit = terrain.mu_lat * f_n
    scale = np.where(mag > limit, limit / np.maximum(mag, 1e-12), 1.0)
    f_t *= scale[..., None]
    f_roll_eff = f_roll * scale

    forces = f_t.copy()
    forces[..., 2] += f_n
    total_force = forces.sum(axis=1)
    total_force[:, 2] -= cfg.base_mass * gravity

    arm = r_world + np.array([0.0, 0.0, -cfg.wheel_radius])
    total_torque = np.cross(arm, forces).sum(axis=1)

    # World-frame inertia from the diagonal body-frame inertia box.
    i_world = np.einsum("nij,j,nkj->nik", rot, cfg.base_inertia, rot)
    ang_mom = np.einsum("nij,nj->ni", i_world, state.base_ang_vel)
    gyro = np.cross(state.base_ang_vel, ang_mom)
    i_world_inv = np.einsum("nij,j,nkj->nik", rot, 1.0 / cfg.base_inertia, rot)
    ang_acc = np.einsum("nij,nj->ni", i_world_inv, total_torque - gyro)

    out = state.copy()
    out.base_lin_vel = state.base_lin_vel + dt * total_force / cfg.base_mass
    out.base_ang_vel = state.base_ang_vel + dt * ang_acc
    out.base_pos = state.base_pos + dt * out.base_lin_vel
    out.base_quat = quat_integrate(state.base_quat, out.base_ang_vel, dt)

    qd = state.qd.copy()
    qd[:, :12] += dt * tau_leg / cfg.leg_reflected_inertia
    qd[:, 12:] += dt * (tau_wheel + cfg.wheel_radius * f_roll_eff) / cfg.wheel_inertia
    out.qd = qd
    out.q = state.q + dt * qd
    out.contact = contact
    out.contact_forces = forces
    out.pid_integral = integral
    out.pid_prev_error = error
    out.time = state.time + dt

    if not (np.isfinite(out.base_pos).all() and np.isfinite(out.qd).all()
            and np.isfinite(out.base_quat).all()):
        raise SimulationDiverged("simulation produced non-finite state", state)

    diag = StepDiagnostics(
        torques=np.concatenate([tau_leg, tau_wheel], axis=1),
        contact_forces=forces,
        slip=np.stack([s_roll, s_lat], axis=-1),
        contact=contact,
    )
    return out, diag


def apply_push(state: SimState, schedule: DisturbanceSchedule, rng):
    """Add a planar velocity impulse to every robot in the batch.

    Direction is uniform in the base x-y plane, magnitude uniform in
    [0, max_push].  Returns (state', push_vectors) with pushes in world
    coordinates.
    """
    n = state.n
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    mag = rng.uniform(0.0, schedule.max_push, size=n)
    dir_base = np.stack([np.cos(angle), np.sin(angle), np.zeros(n)], axis=-1)
    dir_world = quat_rotate(state.base_quat, dir_base)
    push = mag[:, None] * dir_world
    out = state.copy()
    out.base_lin_vel = out.base_lin_vel + push
    return out, push


def base_box_corners(state: SimState, cfg: RobotConfig) -> np.ndarray:
    """World positions of the base box corners.  (n, 8, 3)."""
    half = cfg.base_box / 2.0
    sign = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1)
                     for sz in (-1, 1)], dtype=float)
    corners = sign * half
    rot = quat_to_mat(state.base_quat)
    return state.base_pos[:, None, :] + np.einsum("nij,cj->nci", rot, corners)


def check_termination(state: SimState, cfg: RobotConfig,
                      time_limit: float = 20.0,
                      ground_height: float = 0.0) -> np.ndarray:
    """Episode status per robot: running, base box on the ground, or timeout."""
    corners = base_box_corners(state, cfg)
    fallen = np.any(corners[..., 2] <= ground_height, axis=1)
    timed_out = state.time >= time_limit
    out = np.full(state.n, RUNNING, dtype=int)
    out[timed_out] = TIMEOUT
    out[fallen] = BASE_CONTACT
    return out


def knee_positions(state: SimState, cfg: RobotConfig) -> np.ndarray:
    """World knee-joint positions, used for collision counting.  (n, 4, 3)."""
    n = state.n
    q_leg = state.q[:, :12].reshape(n, 4, 3)
    la, lt, _ = cfg.link_lengths
    q1, q2 = q_leg[..., 0], q_leg[..., 1]
    s1, c1 = np.sin(q1), np.cos(q1)
    ux = -lt * np.sin(q2)
    uy = LEG_SIDE * la * np.ones_like(q1)
    uz = -lt * np.cos(q2)
    p_hip = np.stack([ux, c1 * uy - s1 * uz, s1 * uy + c1 * uz], axis=-1)
    rot = quat_to_mat(state.base_quat)
    r_world = np.einsum("nij,nlj->nli", rot, cfg.hip_offsets + p_hip)
    return state.base_pos[:, None, :] + r_world


def collision_count(state: SimState, cfg: RobotConfig,
                    ground_height: float = 0.0) -> np.ndarray:
    """Number of non-wheel body points touching the ground, per robot."""
    knees = knee_positions(state, cfg)[..., 2] <= ground_height
    corners = base_box_corners(state, cfg)[..., 2] <= ground_height
    return knees.sum(axis=1) + corners.sum(axis=1)
