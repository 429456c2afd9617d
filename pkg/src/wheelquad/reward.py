"""Per-step reward: tracking bonuses and effort/stability penalties.

Velocity terms compare commands against body-frame velocities (yaw uses the
clockwise-positive command convention).  Action-dependent terms use the
normalized residuals so the three channel families weigh comparably.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

TRACKING_SHARPNESS = 4.0

WEIGHTS = {
    "track_vx": 2.0,
    "track_vy": 2.0,
    "track_yaw": 3.0,
    "residual": -0.3,
    "orientation": -2.0,
    "lin_vel_z": -2.0,
    "ang_vel_xy": -0.05,
    "joint_acc": -2.5e-7,
    "torque": -1e-5,
    "smoothness": -0.01,
    "collision": -2.0,
    "energy": -1e-5,
}


@dataclass
class RewardBreakdown:
    """Raw (unweighted) value of each term plus the weighted total."""

    track_vx: np.ndarray
    track_vy: np.ndarray
    track_yaw: np.ndarray
    residual: np.ndarray
    orientation: np.ndarray
    lin_vel_z: np.ndarray
    ang_vel_xy: np.ndarray
    joint_acc: np.ndarray
    torque: np.ndarray
    smoothness: np.ndarray
    collision: np.ndarray
    energy: np.ndarray
    total: np.ndarray

    def terms(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if f.name != "total"}


def compute_reward(v_cmd, lin_vel_body, yaw_rate, gravity_body, ang_vel_body,
                   joint_acc, torques, action, prev_action, prev_action2,
                   collisions, joint_vel=None,
                   include_residual_penalty: bool = True) -> RewardBreakdown:
    """Evaluate every term for a batch of transitions.

    All actions are expected in normalized [-1, 1] units.  joint_vel
    defaults to zeros only if omitted together with torques' energy effect
    being irrelevant (tests); pass the real 16 joint velocities otherwise.
    Setting include_residual_penalty=False reproduces the baseline variant
    without the action-magnitude penalty.
    """
    v_cmd = np.asarray(v_cmd, dtype=float)
    vel = np.asarray(lin_vel_body, dtype=float)
    tau = np.asarray(torques, dtype=float)
    if joint_vel is None:
        joint_vel = np.zeros_like(tau)
    act = np.asarray(action, dtype=float)
    a1 = np.asarray(prev_action, dtype=float)
    a2 = np.asarray(prev_action2, dtype=float)

    track_vx = np.exp(-TRACKING_SHARPNESS * (v_cmd[..., 0] - vel[..., 0]) ** 2)
    track_vy = np.exp(-TRACKING_SHARPNESS * (v_cmd[..., 1] - vel[..., 1]) ** 2)
    track_yaw = np.exp(-TRACKING_SHARPNESS
                       * (v_cmd[..., 2] - np.asarray(yaw_rate)) ** 2)
    residual = np.linalg.norm(act, axis=-1)
    orientation = np.sum(np.asarray(gravity_body)[..., :2] ** 2, axis=-1)
    lin_vel_z = vel[..., 2] ** 2
    ang_vel_xy = np.sum(np.asarray(ang_vel_body)[..., :2] ** 2, axis=-1)
    joint_acc_term = np.sum(np.asarray(joint_acc) ** 2, axis=-1)
    torque_term = np.sum(tau**2, axis=-1)
    smoothness = np.sum((act + a2 - 2.0 * a1) ** 2, axis=-1)
    collision = np.asarray(collisions, dtype=float)
    energy = np.sum((tau * np.asarray(joint_vel)) ** 2, axis=-1)

    total = (WEIGHTS["track_vx"] * track_vx
             + WEIGHTS["track_vy"] * track_vy
             + WEIGHTS["track_yaw"] * track_yaw
             + (WEIGHTS["residual"] * residual if include_residual_penalty else 0.0)
             + WEIGHTS["orientation"] * orientation
             + WEIGHTS["lin_vel_z"] * lin_vel_z
             + WEIGHTS["ang_vel_xy"] * ang_vel_xy
             + WEIGHTS["joint_acc"] * joint_acc_term
             + WEIGHTS["torque"] * torque_term
             + WEIGHTS["smoothness"] * smoothness
             + WEIGHTS["collision"] * collision
             + WEIGHTS["energy"] * energy)

    return RewardBreakdown(
        track_vx=track_vx, track_vy=track_vy, track_yaw=track_yaw,
        residual=residual, orientation=orientation, lin_vel_z=lin_vel_z,
        ang_vel_xy=ang_vel_xy, joint_acc=joint_acc_term, torque=torque_term,
        smoothness=smoothness, collision=collision, energy=energy, total=total)
