"""Gait library, phase dynamics, and nominal foot/wheel commands.

A gait is four phase offsets, a swing duty factor, and a stepping frequency.
Phases live on the unit circle; a leg is in swing while its phase is below
the swing duty factor and in stance otherwise, so a zero duty factor means
wheels never leave the ground.

Internally a GaitState stores one shared clock plus per-leg offsets instead
of four raw phases: the clock advance is then common to all legs and the
relative offsets of the gait are preserved bit-exactly no matter how many
steps are taken.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot_model import LEG_SIDE, RobotConfig, neutral_stance_targets

GAIT_NAMES = ("driving", "trotting", "walking")
DRIVING, TROTTING, WALKING = 0, 1, 2


@dataclass(frozen=True)
class GaitParams:
    name: str
    phase_offsets: np.ndarray  # (4,)
    duty_factor: float         # fraction of the cycle a leg spends in swing
    frequency: float           # Hz

    def __post_init__(self):
        object.__setattr__(self, "phase_offsets",
                           np.asarray(self.phase_offsets, dtype=float))
        if not (0.0 <= self.duty_factor < 1.0):
            raise ValueError("duty_factor must lie in [0, 1)")
        if self.frequency < 0.0:
            raise ValueError("frequency must be non-negative")
        if np.any(self.phase_offsets < 0.0) or np.any(self.phase_offsets >= 1.0):
            raise ValueError("phase offsets must lie in [0, 1)")


class GaitLibrary:
    """Ordered collection of gaits; index is the gait identifier."""

    def __init__(self, gaits):
        self.gaits = tuple(gaits)
        if len(self.gaits) < 1:
            raise ValueError("library must hold at least one gait")
        self.offsets = np.stack([g.phase_offsets for g in self.gaits])
        self.duty_factors = np.array([g.duty_factor for g in self.gaits])
        self.frequencies = np.array([g.frequency for g in self.gaits])
        self.names = tuple(g.name for g in self.gaits)

    def __len__(self):
        return len(self.gaits)

    def __getitem__(self, idx) -> GaitParams:
        return self.gaits[idx]

    def index(self, name: str) -> int:
        return self.names.index(name)

    @classmethod
    def default(cls) -> "GaitLibrary":
        return cls([
            GaitParams("driving", np.array([0.0, 0.0, 0.0, 0.0]), 0.0, 0.0),
            GaitParams("trotting", np.array([0.0, 0.5, 0.0, 0.5]), 0.4, 1.2),
            GaitParams("walking", np.array([0.0, 0.25, 0.5, 0.75]), 0.225, 0.8),
        ])

    @classmethod
    def from_dict(cls, rows) -> "GaitLibrary":
        return cls([GaitParams(r["name"], np.asarray(r["phase_offsets"], dtype=float),
                               float(r["duty_factor"]), float(r["frequency"]))
                    for r in rows])


@dataclass
class ResidualBounds:
    """Hard clamps on the residual action channels."""

    phase: float = 0.15        # per-leg phase shift
    foot_pos: float = 0.10     # m, per axis
    wheel_vel: float = 10.0    # rad/s

    def as_vector(self) -> np.ndarray:
        return np.concatenate([
            np.full(4, self.phase),
            np.full(12, self.foot_pos),
            np.full(4, self.wheel_vel),
        ])


@dataclass
class GaitState:
    """Phase state of one robot or a batch of robots.

    clock: (...,) shared cycle position, leg_offsets: (..., 4) per-leg shifts
    (gait offsets plus accumulated phase residuals).  pending_offsets holds
    the offset row applied at the most recent gait switch.
    """

    clock: np.ndarray
    leg_offsets: np.ndarray
    active_gait: np.ndarray    # (...,) int identifiers into a GaitLibrary
    pending_offsets: np.ndarray

    @property
    def phases(self) -> np.ndarray:
        return (self.clock[..., None] + self.leg_offsets) % 1.0

    def copy(self) -> "GaitState":
        return GaitState(self.clock.copy(), self.leg_offsets.copy(),
                         self.active_gait.copy(), self.pending_offsets.copy())

    @classmethod
    def initial(cls, library: GaitLibrary, gait_id: int = DRIVING, n: int = 1):
        offs = np.tile(library.offsets[gait_id], (n, 1))
        return cls(clock=np.zeros(n), leg_offsets=offs,
                   active_gait=np.full(n, gait_id, dtype=int),
                   pending_offsets=offs.copy())


def advance_phase(state: GaitState, frequency, dt: float) -> GaitState:
    """One clock tick: every phase moves by frequency * dt, modulo 1."""
    out = state.copy()
    out.clock = (out.clock + np.asarray(frequency) * dt) % 1.0
    return out


def apply_phase_residual(state: GaitState, dphi, bound: float = 0.15) -> GaitState:
    """Shift per-leg offsets by a clamped residual.  dphi: (..., 4)."""
    out = state.copy()
    out.leg_offsets = (out.leg_offsets + np.clip(dphi, -bound, bound)) % 1.0
    return out


def switch_gait(state: GaitState, gait_id, library: GaitLibrary,
                env_ids=None) -> GaitState:
    """Adopt a new gait: phases reset to the gait's offset row.

    Accumulated phase residuals are discarded at the switch so the new gait
    starts from its published footfall pattern.
    """
    out = state.copy()
    if env_ids is None:
        env_ids = np.arange(out.clock.shape[0])
    gid = np.broadcast_to(np.asarray(gait_id, dtype=int), np.shape(env_ids)).astype(int)
    out.clock[env_ids] = 0.0
    out.leg_offsets[env_ids] = library.offsets[gid]
    out.pending_offsets[env_ids] = library.offsets[gid]
    out.active_gait[env_ids] = gid
    return out


# ---------------------------------------------------------------------------
# Swing trajectory


def swing_height(psi, body_height: float, step_height: float):
    """Vertical contact-point trajectory over one swing, hip frame.

    Two cubic segments meeting at the apex: starts and ends at -body_height,
    peaks at -body_height + step_height, with zero vertical velocity at
    lift-off, apex, and touch-down.
    """
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0.0) or np.any(psi > 1.0):
        raise ValueError("swing progress must lie in [0, 1]")
    up = step_height * (-16.0 * psi**3 + 12.0 * psi**2)
    down = step_height * (16.0 * psi**3 - 36.0 * psi**2 + 24.0 * psi - 4.0)
    z = -body_height + np.where(psi <= 0.5, up, down)
    return z if z.ndim else float(z)


def swing_progress(phases, duty_factor):
    """Map phase to in-swing progress in [0, 1); stance legs report 0."""
    phases = np.asarray(phases, dtype=float)
    df = np.asarray(duty_factor, dtype=float)
    safe = np.where(df > 0.0, df, 1.0)
    prog = np.where((df > 0.0) & (phases < df), phases / safe, 0.0)
    return prog


def in_swing(phases, duty_factor):
    phases = np.asarray(phases, dtype=float)
    df = np.asarray(duty_factor, dtype=float)
    return (df > 0.0) & (phases < df)


def nominal_foot_positions(state: GaitState, library: GaitLibrary,
                           cfg: RobotConfig) -> np.ndarray:
    """Nominal contact-point targets for all legs, hip frames.  (..., 4, 3).

    Horizontal components stay at the neutral stance point; propulsion is
    the wheels' job and lateral corrections are the residual policy's.
    Stance legs hold z = -body height, swing legs follow the swing curve.
    """
    df = library.duty_factors[state.active_gait][..., None]       # (..., 1)
    phases = state.phases                                         # (..., 4)
    targets = np.broadcast_to(
        neutral_stance_targets(cfg), phases.shape + (3,)).copy()
    psi = swing_progress(phases, df)
    up = cfg.nominal_step_height * (-16.0 * psi**3 + 12.0 * psi**2)
    down = cfg.nominal_step_height * (16.0 * psi**3 - 36.0 * psi**2
                                      + 24.0 * psi - 4.0)
    lift = np.where(psi <= 0.5, up, down)
    targets[..., 2] += np.where(in_swing(phases, df), lift, 0.0)
    return targets


def nominal_foot_position(leg: int, state: GaitState, library: GaitLibrary,
                          cfg: RobotConfig) -> np.ndarray:
    return nominal_foot_positions(state, library, cfg)[..., leg, :]


# ---------------------------------------------------------------------------
# Nominal wheel velocities


def nominal_wheel_velocity(v_cmd, contact, previous, cfg: RobotConfig) -> np.ndarray:
    """Rolling speeds that realize the planar command, per wheel.  (..., 4).

    Right wheels: -(vx - d*wz)/R; left wheels: -(vx + d*wz)/R.  Negative
    values roll the robot forward; positive yaw command turns it clockwise
    viewed from above.  The lateral command never appears: wheels cannot
    actuate sideways.  Airborne wheels hold their previous command.
    """
    v_cmd = np.asarray(v_cmd, dtype=float)
    contact = np.asarray(contact, dtype=bool)
    previous = np.asarray(previous, dtype=float)
    vx = v_cmd[..., 0:1]
    wz = v_cmd[..., 2:3]
    d = cfg.base_to_wheel_lateral
    # LEG_SIDE is +1 on the left, so this expands to
    # right: -(vx - d*wz)/R, left: -(vx + d*wz)/R.
    rolling = -(vx + LEG_SIDE * d * wz) / cfg.wheel_radius
    rolling = np.clip(rolling, -cfg.wheel_speed_limit, cfg.wheel_speed_limit)
    return np.where(contact, rolling, previous)
