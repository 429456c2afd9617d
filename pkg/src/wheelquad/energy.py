"""Power accounting and predictive gait selection.

The cost of transport proxy is the summed |torque| * |speed| over all 16
actuated joints.  A small network predicts, from the current observation,
the mean power each gait would draw over the next selection horizon; gaits
are then sampled from a softmax over negated predictions whose temperature
anneals from exploration-friendly to near-greedy across training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .nets import Adam, FeedForwardNet

# One selection horizon: 50 control ticks at 50 Hz = 1 s.
SELECTION_PERIOD = 50


class PowerSample(NamedTuple):
    """Horizon-aligned training example for the predictor."""

    observation: np.ndarray
    gait_id: int
    mean_power: float


def instantaneous_power(torques, joint_velocities) -> np.ndarray:
    """Mechanical power proxy: sum_i |tau_i| * |qd_i| over the 16 joints."""
    tau = np.asarray(torques, dtype=float)
    qd = np.asarray(joint_velocities, dtype=float)
    return np.sum(np.abs(tau) * np.abs(qd), axis=-1)


@dataclass
class TemperatureSchedule:
    """Geometric interpolation between a hot start and a cold end, in watts."""

    tau_start: float = 8.0
    tau_end: float = 0.5
    total_epochs: int = 300

    def __post_init__(self):
        if self.tau_start <= 0 or self.tau_end <= 0:
            raise ValueError("temperatures must be positive")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be at least 1")

    def temperature(self, epoch: int) -> float:
        frac = np.clip(epoch / self.total_epochs, 0.0, 1.0)
        return float(self.tau_start * (self.tau_end / self.tau_start) ** frac)


def anneal_temperature(schedule: TemperatureSchedule, epoch: int) -> float:
    return schedule.temperature(epoch)


def gait_probabilities(p_est, temperature: float) -> np.ndarray:
    """Softmax over negated power estimates.

    Subtracting the minimum power before exponentiation keeps the exponent
    range bounded regardless of the absolute wattage.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    p = np.asarray(p_est, dtype=float)
    logits = -(p - p.min(axis=-1, keepdims=True)) / temperature
    e = np.exp(logits)
    return e / e.sum(axis=-1, keepdims=True)


def select_gait(p_est, temperature: float, rng) -> np.ndarray:
    """Sample gait ids from the selection distribution.

    p_est: (..., n_gaits) -> int array of shape (...,) (or a scalar int for
    a single estimate vector).
    """
    probs = gait_probabilities(p_est, temperature)
    flat = probs.reshape(-1, probs.shape[-1])
    u = rng.random(flat.shape[0])
    cum = np.cumsum(flat, axis=-1)
    picks = (u[:, None] > cum).sum(axis=-1)
    picks = np.minimum(picks, flat.shape[1] - 1)
    if probs.ndim == 1:
        return int(picks[0])
    return picks.reshape(probs.shape[:-1])


def make_predictor(obs_dim: int, n_gaits: int = 3, hidden=(128, 128),
                   rng=None) -> FeedForwardNet:
    return FeedForwardNet([obs_dim, *hidden, n_gaits], activation="elu", rng=rng)


def predict_power(net: FeedForwardNet, observation) -> np.ndarray:
    """Per-gait horizon-mean power estimates for an observation batch."""
    return net.forward(observation)


def predictor_loss_and_grads(net: FeedForwardNet, observations, gait_ids,
                             targets):
    """Masked MSE: only the executed gait's head receives error signal.

    Returns (loss, grads).  Rejects non-finite targets outright; silently
    fitting garbage power numbers would poison selection.
    """
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    gait_ids = np.asarray(gait_ids, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite power targets rejected")
    if obs.shape[0] != gait_ids.size or gait_ids.size != targets.size:
        raise ValueError("batch sizes disagree")
    pred, cache = net.forward_cached(obs)
    rows = np.arange(obs.shape[0])
    err = pred[rows, gait_ids] - targets
    loss = float(np.mean(err**2))
    grad_out = np.zeros_like(pred)
    grad_out[rows, gait_ids] = 2.0 * err / err.size
    grads, _ = net.backward(cache, grad_out)
    return loss, grads


def update_predictor(net: FeedForwardNet, opt: Adam, observations, gait_ids,
                     targets) -> float:
    """One supervised step on a batch of (observation, gait, power) samples."""
    loss, grads = predictor_loss_and_grads(net, observations, gait_ids, targets)
    opt.step(grads)
    return loss
