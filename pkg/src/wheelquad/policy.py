"""Observation assembly, state estimation, and the residual actor/critic.

Observation layout (98 = 58 + 2 * 20 action dims):

    [0:3)    base angular velocity, base frame
    [3:6)    gravity direction, base frame
    [6:18)   leg joint positions
    [18:34)  joint velocities (legs then wheels)
    [34:52)  gait info vector
    [52:55)  estimated planar velocity and base height
    [55:58)  velocity command (vx, vy, yaw rate)
    [58:78)  previous action, normalized to [-1, 1] per channel
    [78:98)  action before that

The estimator consumes a history of these observations with the estimate
slot removed (it must not read its own output), newest first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gait_core
from .gait_core import GaitLibrary, GaitState, ResidualBounds
from .nets import FeedForwardNet
from .robot_model import RobotConfig
from .simulator import TerrainModel

ACT_DIM = 20
OBS_DIM = 58 + 2 * ACT_DIM
HISTORY_LENGTH = 6
PRIV_DIM = 18

OBS_ANG_VEL = slice(0, 3)
OBS_GRAVITY = slice(3, 6)
OBS_Q_LEG = slice(6, 18)
OBS_QD = slice(18, 34)
OBS_GAIT = slice(34, 52)
OBS_ESTIMATE = slice(52, 55)
OBS_CMD = slice(55, 58)
OBS_PREV_ACT = slice(58, 78)
OBS_PREV_ACT2 = slice(78, 98)

PARTIAL_DIM = OBS_DIM - 3  # observation with the estimate slot removed
ESTIMATOR_INPUT_DIM = HISTORY_LENGTH * PARTIAL_DIM


def assemble_gait_info(phases, dphi, frequency, duty_factor, v_nominal):
    """Gait info vector: phase sin/cos, applied phase residual, clock
    parameters, and nominal wheel speeds.  (..., 18)."""
    phases = np.asarray(phases, dtype=float)
    two_pi = 2.0 * np.pi
    f = np.broadcast_to(np.asarray(frequency, dtype=float),
                        phases.shape[:-1])[..., None]
    df = np.broadcast_to(np.asarray(duty_factor, dtype=float),
                         phases.shape[:-1])[..., None]
    return np.concatenate([
        np.sin(two_pi * phases),
        np.cos(two_pi * phases),
        np.asarray(dphi, dtype=float) * np.ones_like(phases),
        f,
        df,
        np.asarray(v_nominal, dtype=float) * np.ones_like(phases),
    ], axis=-1)


def assemble_partial_observation(ang_vel_body, gravity_body, q_leg, qd,
                                 gait_info, v_cmd, prev_action, prev_action2):
    """Everything except the estimate slot.  (..., 95)."""
    return np.concatenate([
        ang_vel_body, gravity_body, q_leg, qd, gait_info, v_cmd,
        prev_action, prev_action2], axis=-1)


def insert_estimate(partial, estimate):
    """Splice the estimate slot into a partial observation.  (..., 98)."""
    partial = np.asarray(partial, dtype=float)
    split = OBS_ESTIMATE.start
    return np.concatenate([
        partial[..., :split],
        np.asarray(estimate, dtype=float),
        partial[..., split:]], axis=-1)


def strip_estimate(obs):
    obs = np.asarray(obs, dtype=float)
    return np.concatenate(
        [obs[..., :OBS_ESTIMATE.start], obs[..., OBS_ESTIMATE.stop:]], axis=-1)


def assemble_privileged(terrain: TerrainModel, contact_forces, push):
    """Critic-only features: contact material, wheel forces, active push."""
    contact_forces = np.asarray(contact_forces, dtype=float)
    lead = contact_forces.shape[:-2]
    mat = np.broadcast_to(
        np.array([terrain.mu_roll, terrain.mu_lat, terrain.restitution]),
        lead + (3,))
    return np.concatenate([
        mat,
        contact_forces.reshape(lead + (12,)),
        np.asarray(push, dtype=float)], axis=-1)


class ObservationHistory:
    """Fixed-length ring of partial observations, newest first."""

    def __init__(self, n_envs: int, length: int = HISTORY_LENGTH,
                 dim: int = PARTIAL_DIM):
        self.buf = np.zeros((n_envs, length, dim))
        self.filled = np.zeros(n_envs, dtype=int)
        self.length = length

    def push(self, partial_obs):
        self.buf = np.roll(self.buf, 1, axis=1)
        self.buf[:, 0] = partial_obs
        self.filled = np.minimum(self.filled + 1, self.length)

    def reset(self, env_ids, partial_obs):
        """Warm-start: fill every slot with the first observation."""
        self.buf[env_ids] = np.asarray(partial_obs, dtype=float)[:, None, :]
        self.filled[env_ids] = self.length

    @property
    def warmed_up(self):
        return self.filled >= self.length

    def flat(self) -> np.ndarray:
        if not np.all(self.warmed_up):
            raise RuntimeError("observation history not warmed up")
        return self.buf.reshape(self.buf.shape[0], -1)


class StateEstimator:
    """Supervised net mapping observation history to (vx, vy, base height).

    Inference reads nothing but the history buffer; ground truth only ever
    appears as a regression target during training.
    """

    def __init__(self, hidden=(128, 128), rng=None,
                 input_dim: int = ESTIMATOR_INPUT_DIM):
        self.net = FeedForwardNet([input_dim, *hidden, 3], rng=rng)

    def estimate(self, history_flat) -> np.ndarray:
        return self.net.forward(history_flat)


class ResidualActor:
    """Gaussian policy in pre-squash space, squashed into the residual bounds.

    The network outputs an unbounded mean; samples pass through a scaled
    tanh so every emitted action respects the bounds no matter the weights.
    The log standard deviation is a free state-independent parameter.
    """

    def __init__(self, bounds: ResidualBounds = None, hidden=(128, 128, 128),
                 rng=None, init_log_std: float = np.log(0.6),
                 obs_dim: int = OBS_DIM):
        self.bounds = bounds if bounds is not None else ResidualBounds()
        self.scale = self.bounds.as_vector()
        self.net = FeedForwardNet([obs_dim, *hidden, ACT_DIM], rng=rng,
                                  out_scale=0.01)
        self.log_std = np.full(ACT_DIM, float(init_log_std))

    def parameters(self):
        return self.net.parameters() + [self.log_std]

    def forward(self, obs):
        """Returns (squashed mean action, log_std)."""
        u = self.net.forward(obs)
        return self.scale * np.tanh(u), self.log_std.copy()

    def sample(self, obs, rng):
        """Returns (action, pre-squash sample, log-prob)."""
        u = self.net.forward(obs)
        sigma = np.exp(self.log_std)
        w = u + sigma * rng.standard_normal(u.shape)
        action = self.scale * np.tanh(w)
        return action, w, self._logp(u, w)

    def _logp(self, u, w):
        sigma = np.exp(self.log_std)
        z = (w - u) / sigma
        gauss = -0.5 * z**2 - self.log_std - 0.5 * np.log(2.0 * np.pi)
        squash = np.log(self.scale * (1.0 - np.tanh(w) ** 2) + 1e-12)
        return (gauss - squash).sum(axis=-1)

    def logp_cached(self, obs, w):
        """Log-prob of stored pre-squash samples plus the backprop cache."""
        u, cache = self.net.forward_cached(obs)
        return self._logp(u, w), u, cache

    def entropy(self):
        """Gaussian entropy of the pre-squash distribution, per sample."""
        return float(np.sum(self.log_std + 0.5 * np.log(2.0 * np.pi * np.e)))

    def deterministic(self, obs):
        return self.forward(obs)[0]


class PrivilegedCritic:
    """Value net over observation plus privileged simulator features."""

    def __init__(self, hidden=(128, 128, 128), rng=None,
                 obs_dim: int = OBS_DIM, priv_dim: int = PRIV_DIM):
        self.net = FeedForwardNet([obs_dim + priv_dim, *hidden, 1], rng=rng)

    def value(self, obs, priv):
        x = np.concatenate([obs, priv], axis=-1)
        return self.net.forward(x)[..., 0]


def normalized_action(action, bounds: ResidualBounds):
    """Map a physical residual onto [-1, 1] per channel."""
    return np.asarray(action, dtype=float) / bounds.as_vector()


def apply_action(action, gait_state: GaitState, v_nominal,
                 library: GaitLibrary, cfg: RobotConfig,
                 bounds: ResidualBounds = None):
    """Blend a residual action into the nominal gait commands.

    Returns (contact-point targets (..., 4, 3) in hip frames, wheel speed
    targets (..., 4), updated gait state, the clamped phase residual).
    A zero action reproduces the nominal gait exactly.
    """
    bounds = bounds if bounds is not None else ResidualBounds()
    action = np.asarray(action, dtype=float)
    dphi = np.clip(action[..., 0:4], -bounds.phase, bounds.phase)
    dpos = np.clip(action[..., 4:16], -bounds.foot_pos, bounds.foot_pos)
    dvel = np.clip(action[..., 16:20], -bounds.wheel_vel, bounds.wheel_vel)

    new_state = gait_core.apply_phase_residual(gait_state, dphi, bounds.phase)
    p_des = gait_core.nominal_foot_positions(new_state, library, cfg)
    p_des = p_des + dpos.reshape(dpos.shape[:-1] + (4, 3))
    v_des = np.clip(np.asarray(v_nominal, dtype=float) + dvel,
                    -cfg.wheel_speed_limit, cfg.wheel_speed_limit)
    return p_des, v_des, new_state, dphi
