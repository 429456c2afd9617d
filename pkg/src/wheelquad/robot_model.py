"""Robot geometry, configuration loading, and analytic leg kinematics.

Frames: base x forward, y left, z up.  Each hip frame is axis-aligned with
the base, origin at the abduction joint.  A leg is a chain of three revolute
joints: abduction about x, then a lateral offset along y, then hip and knee
pitch joints about y with the thigh and shank links.  The wheel center sits
at the end of the shank; the contact point is one wheel radius below it.

Leg order is FR, FL, RL, RR so that legs (1, 3) and (2, 4) form diagonal
pairs; phase offset rows in the gait library rely on this pairing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

N_LEGS = 4
LEG_NAMES = ("FR", "FL", "RL", "RR")
LEG_SIDE = np.array([-1.0, 1.0, 1.0, -1.0])  # +1 = left side, -1 = right side

# Fields that a robot configuration document must provide explicitly.
REQUIRED_FIELDS = (
    "hip_offsets",
    "link_lengths",
    "wheel_radius",
    "base_to_wheel_lateral",
    "base_mass",
    "leg_joint_limits",
    "pd_gains",
    "pid_gains",
    "nominal_body_height",
    "nominal_step_height",
)


class ConfigError(ValueError):
    """Robot configuration rejected: missing field or violated invariant."""


class WorkspaceError(ValueError):
    """IK target outside the leg workspace.

    Carries the nearest reachable point (the clamped target) so callers can
    degrade gracefully instead of crashing mid-rollout.
    """

    def __init__(self, message: str, clamped_target):
        super().__init__(message)
        self.clamped_target = np.asarray(clamped_target, dtype=float)


@dataclass(frozen=True)
class LegJointAngles:
    """Joint angles for one leg, radians."""

    abduction: float
    hip: float
    knee: float

    def as_array(self) -> np.ndarray:
        return np.array([self.abduction, self.hip, self.knee])


@dataclass
class RobotConfig:
    hip_offsets: np.ndarray            # (4, 3) hip origins in the base frame
    link_lengths: np.ndarray           # (3,) abduction offset, thigh, shank
    wheel_radius: float
    base_to_wheel_lateral: np.ndarray  # (4,) |y| of each wheel at neutral stance
    base_mass: float
    leg_joint_limits: np.ndarray       # (12, 2) min/max per leg joint
    pd_gains: np.ndarray               # (12, 2) k_p, k_d per leg joint
    pid_gains: np.ndarray              # (4, 3) k_p, k_i, k_d per wheel
    nominal_body_height: float         # base height above ground at stance
    nominal_step_height: float         # swing apex clearance

    # Reduced-order dynamics parameters (defaulted; overridable in the file).
    base_inertia: np.ndarray = field(
        default_factory=lambda: np.array([0.0667, 0.2267, 0.2667]))
    base_box: np.ndarray = field(
        default_factory=lambda: np.array([0.50, 0.30, 0.10]))
    leg_torque_limit: float = 23.0
    wheel_torque_limit: float = 6.0
    leg_reflected_inertia: float = 0.02
    wheel_inertia: float = 0.01
    wheel_speed_limit: float = 40.0
    pid_integral_limit: float = 2.0

    def __post_init__(self):
        self.hip_offsets = np.asarray(self.hip_offsets, dtype=float)
        self.link_lengths = np.asarray(self.link_lengths, dtype=float)
        self.base_to_wheel_lateral = np.asarray(self.base_to_wheel_lateral, dtype=float)
        self.leg_joint_limits = np.asarray(self.leg_joint_limits, dtype=float)
        self.pd_gains = np.asarray(self.pd_gains, dtype=float)
        self.pid_gains = np.asarray(self.pid_gains, dtype=float)
        self.base_inertia = np.asarray(self.base_inertia, dtype=float)
        self.base_box = np.asarray(self.base_box, dtype=float)
        _validate(self)

    @property
    def max_leg_reach(self) -> float:
        return float(self.link_lengths[1] + self.link_lengths[2])

    @classmethod
    def default(cls) -> "RobotConfig":
        return cls(
            hip_offsets=np.array([
                [0.19, -0.05, 0.0],   # FR
                [0.19, 0.05, 0.0],    # FL
                [-0.19, 0.05, 0.0],   # RL
                [-0.19, -0.05, 0.0],  # RR
            ]),
            link_lengths=np.array([0.08, 0.213, 0.213]),
            wheel_radius=0.05,
            base_to_wheel_lateral=np.array([0.13, 0.13, 0.13, 0.13]),
            base_mass=16.0,
            leg_joint_limits=np.tile(
                np.array([[-0.9, 0.9], [-1.6, 1.6], [0.12, 2.6]]), (4, 1)),
            pd_gains=np.tile(np.array([[25.0, 0.6]]), (12, 1)),
            pid_gains=np.tile(np.array([[0.8, 2.0, 0.0]]), (4, 1)),
            nominal_body_height=0.30,
            nominal_step_height=0.09,
        )


def _validate(cfg: RobotConfig):
    if cfg.hip_offsets.shape != (4, 3):
        raise ConfigError("hip_offsets must be 4x3")
    if cfg.link_lengths.shape != (3,) or np.any(cfg.link_lengths <= 0):
        raise ConfigError("link_lengths must be three positive values")
    if cfg.wheel_radius <= 0:
        raise ConfigError("wheel_radius must be positive")
    if cfg.base_mass <= 0:
        raise ConfigError("base_mass must be positive")
    if cfg.base_to_wheel_lateral.shape != (4,) or np.any(cfg.base_to_wheel_lateral <= 0):
        raise ConfigError("base_to_wheel_lateral must be four positive values")
    if cfg.leg_joint_limits.shape != (12, 2):
        raise ConfigError("leg_joint_limits must be 12x2")
    if np.any(cfg.leg_joint_limits[:, 0] >= cfg.leg_joint_limits[:, 1]):
        raise ConfigError("leg_joint_limits must satisfy min < max")
    if cfg.pd_gains.shape != (12, 2) or np.any(cfg.pd_gains < 0):
        raise ConfigError("pd_gains must be 12x2 and non-negative")
    if cfg.pid_gains.shape != (4, 3) or np.any(cfg.pid_gains < 0):
        raise ConfigError("pid_gains must be 4x3 and non-negative")
    if cfg.nominal_body_height <= 0:
        raise ConfigError("nominal_body_height must be positive")
    if cfg.nominal_body_height >= cfg.max_leg_reach:
        raise ConfigError("nominal_body_height exceeds leg reach")
    if cfg.nominal_step_height <= 0:
        raise ConfigError("nominal_step_height must be positive")
    # Left/right legs must mirror about the x-z plane: (FR, FL) and (RL, RR).
    for a, b in ((0, 1), (2, 3)):
        pa, pb = cfg.hip_offsets[a], cfg.hip_offsets[b]
        if not (np.isclose(pa[0], pb[0]) and np.isclose(pa[1], -pb[1])
                and np.isclose(pa[2], pb[2])):
            raise ConfigError(
                f"hip_offsets for {LEG_NAMES[a]}/{LEG_NAMES[b]} must mirror in y")


def load_config(source) -> RobotConfig:
    """Build a RobotConfig from a JSON file path, JSON text, or a dict.

    The document must contain every field in REQUIRED_FIELDS; optional
    dynamics fields fall back to defaults.  Raises ConfigError with the
    offending field named.
    """
    if isinstance(source, RobotConfig):
        return source
    if isinstance(source, dict):
        doc = source
    else:
        try:
            is_file = Path(str(source)).exists()
        except OSError:
            # inline JSON can exceed the filesystem name limit
            is_file = False
        text = Path(source).read_text() if is_file else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"not valid JSON: {e}") from e
    if "robot" in doc and isinstance(doc["robot"], dict):
        doc = doc["robot"]
    for name in REQUIRED_FIELDS:
        if name not in doc:
            raise ConfigError(f"missing field {name}")
    known = {f.name for f in fields(RobotConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown fields: {sorted(unknown)}")
    return RobotConfig(**doc)


# ---------------------------------------------------------------------------
# Forward kinematics


def leg_forward_kinematics(q: np.ndarray, cfg: RobotConfig) -> np.ndarray:
    """Wheel-center positions in hip frames for all four legs.

    q: (..., 4, 3) joint angles -> (..., 4, 3) positions.  Broadcast over
    leading axes so a whole batch of robots is one call.
    """
    q = np.asarray(q, dtype=float)
    la, lt, ls = cfg.link_lengths
    q1, q2, q3 = q[..., 0], q[..., 1], q[..., 2]
    s1, c1 = np.sin(q1), np.cos(q1)
    s2, c2 = np.sin(q2), np.cos(q2)
    s23, c23 = np.sin(q2 + q3), np.cos(q2 + q3)
    ux = -lt * s2 - ls * s23
    uy = LEG_SIDE * la * np.ones_like(q1)
    uz = -lt * c2 - ls * c23
    return np.stack([ux, c1 * uy - s1 * uz, s1 * uy + c1 * uz], axis=-1)


def forward_kinematics(leg: int, q, cfg: RobotConfig) -> np.ndarray:
    """Wheel-center position of one leg in its hip frame.

    q may be a LegJointAngles or a length-3 array.
    """
    if isinstance(q, LegJointAngles):
        q = q.as_array()
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("joint angles must be finite")
    full = np.zeros((4, 3))
    full[leg] = q
    return leg_forward_kinematics(full, cfg)[leg]


def leg_jacobians(q: np.ndarray, cfg: RobotConfig) -> np.ndarray:
    """d(wheel center)/d(joint angles), hip frame.  (..., 4, 3) -> (..., 4, 3, 3)."""
    q = np.asarray(q, dtype=float)
    la, lt, ls = cfg.link_lengths
    q1, q2, q3 = q[..., 0], q[..., 1], q[..., 2]
    s1, c1 = np.sin(q1), np.cos(q1)
    s2, c2 = np.sin(q2), np.cos(q2)
    s23, c23 = np.sin(q2 + q3), np.cos(q2 + q3)
    ux = -lt * s2 - ls * s23
    uy = LEG_SIDE * la * np.ones_like(q1)
    uz = -lt * c2 - ls * c23
    py = c1 * uy - s1 * uz
    pz = s1 * uy + c1 * uz
    zeros = np.zeros_like(q1)
    # column 1: rotation of the whole leg about hip x
    col1 = np.stack([zeros, -pz, py], axis=-1)
    # columns 2 and 3: pitch rotations mapped through the abduction rotation
    col2 = np.stack([uz, s1 * ux, -c1 * ux], axis=-1)
    col3 = np.stack([-ls * c23, -s1 * (ls * s23), c1 * (ls * s23)], axis=-1)
    return np.stack([col1, col2, col3], axis=-1)


# ---------------------------------------------------------------------------
# Inverse kinematics


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def inverse_kinematics(leg: int, p_target, cfg: RobotConfig) -> LegJointAngles:
    """Closed-form IK for the wheel center of one leg, hip frame.

    Branch conventions: foot below the abduction axis, knee folds backward
    (knee angle in [0, pi]).  Raises WorkspaceError for unreachable targets,
    attaching the nearest reachable point.
    """
    q, clamped, reachable = _ik_impl(leg, np.asarray(p_target, dtype=float), cfg)
    if not reachable:
        raise WorkspaceError(
            f"target {np.asarray(p_target)} out of workspace for leg "
            f"{LEG_NAMES[leg]}", clamped)
    return LegJointAngles(*q)


def inverse_kinematics_clamped(leg: int, p_target, cfg: RobotConfig):
    """IK that clamps unreachable targets instead of raising.

    Returns (LegJointAngles, was_clamped).
    """
    q, _, reachable = _ik_impl(leg, np.asarray(p_target, dtype=float), cfg)
    return LegJointAngles(*q), not reachable


def _ik_impl(leg: int, p: np.ndarray, cfg: RobotConfig):
    la, lt, ls = cfg.link_lengths
    offset = LEG_SIDE[leg] * la
    x, y, z = float(p[0]), float(p[1]), float(p[2])
    reachable = True

    r = np.hypot(y, z)
    if r < la:
        reachable = False
        if r < 1e-12:
            y, z = 0.0, -la  # arbitrary direction when target sits on the hip axis
        else:
            y, z = y * la / r, z * la / r
        r = la
    q1 = np.arctan2(z, y) + np.arccos(np.clip(offset / r, -1.0, 1.0))
    q1 = float(_wrap_angle(q1))

    c1, s1 = np.cos(q1), np.sin(q1)
    z2 = -s1 * y + c1 * z  # planar coordinate in the leg plane, <= 0 by branch
    d_sq = x * x + z2 * z2
    d = np.sqrt(d_sq)
    d_max = lt + ls
    d_min = abs(lt - ls)
    if d > d_max or d < d_min:
        reachable = False
        d_clamped = min(max(d, max(d_min, 1e-9)), d_max)
        if d < 1e-12:
            x, z2 = 0.0, -d_clamped
        else:
            x, z2 = x * d_clamped / d, z2 * d_clamped / d
        d = d_clamped
        d_sq = d * d

    c3 = (d_sq - lt * lt - ls * ls) / (2.0 * lt * ls)
    q3 = float(np.arccos(np.clip(c3, -1.0, 1.0)))
    s3 = np.sin(q3)
    # planar position of the wheel center before the hip rotation
    a_x, a_z = -ls * s3, -lt - ls * np.cos(q3)
    q2 = float(_wrap_angle(np.arctan2(a_z, a_x) - np.arctan2(z2, x)))

    clamped_point = None
    if not reachable:
        clamped_point = forward_kinematics(leg, np.array([q1, q2, q3]), cfg)
    return (q1, q2, q3), clamped_point, reachable


def leg_inverse_kinematics(p_targets: np.ndarray, cfg: RobotConfig):
    """Vectorized IK for wheel centers of all four legs.

    p_targets: (..., 4, 3) hip-frame targets.  Unreachable entries are
    clamped to the nearest reachable point instead of raising, because this
    runs inside the control loop.  Returns (angles (..., 4, 3), clamped
    (..., 4) bool).  Same branch conventions as inverse_kinematics.
    """
    p = np.asarray(p_targets, dtype=float)
    la, lt, ls = cfg.link_lengths
    offset = LEG_SIDE * la
    x, y, z = p[..., 0].copy(), p[..., 1].copy(), p[..., 2].copy()

    r = np.hypot(y, z)
    too_close = r < la
    on_axis = r < 1e-12
    scale = np.where(too_close & ~on_axis, la / np.maximum(r, 1e-300), 1.0)
    y, z = y * scale, z * scale
    y = np.where(on_axis, 0.0, y)
    z = np.where(on_axis, -la, z)
    r = np.maximum(r, la)
    q1 = _wrap_angle(np.arctan2(z, y) + np.arccos(np.clip(offset / r, -1.0, 1.0)))

    c1, s1 = np.cos(q1), np.sin(q1)
    z2 = -s1 * y + c1 * z
    d = np.hypot(x, z2)
    d_max, d_min = lt + ls, abs(lt - ls)
    out_of_annulus = (d > d_max) | (d < d_min)
    d_cl = np.clip(d, max(d_min, 1e-9), d_max)
    shrink = np.where(d > 1e-12, d_cl / np.maximum(d, 1e-300), 0.0)
    x = np.where(d > 1e-12, x * shrink, 0.0)
    z2 = np.where(d > 1e-12, z2 * shrink, -d_cl)

    c3 = np.clip((d_cl**2 - lt * lt - ls * ls) / (2.0 * lt * ls), -1.0, 1.0)
    q3 = np.arccos(c3)
    a_x, a_z = -ls * np.sin(q3), -lt - ls * c3
    q2 = _wrap_angle(np.arctan2(a_z, a_x) - np.arctan2(z2, x))

    return np.stack([q1, q2, q3], axis=-1), too_close | out_of_annulus


def neutral_stance_targets(cfg: RobotConfig) -> np.ndarray:
    """Wheel contact points at neutral stance, hip frames.  (4, 3).

    The contact point sits straight below the abduction offset so the wheel
    track matches base_to_wheel_lateral with zero abduction.
    """
    out = np.zeros((4, 3))
    out[:, 1] = LEG_SIDE * cfg.link_lengths[0]
    out[:, 2] = -cfg.nominal_body_height
    return out


def wheel_center_from_contact(p_contact: np.ndarray, cfg: RobotConfig) -> np.ndarray:
    """Kinematic targets address the contact point; the chain ends at the
    wheel center one radius above it."""
    p = np.array(p_contact, dtype=float, copy=True)
    p[..., 2] += cfg.wheel_radius
    return p
