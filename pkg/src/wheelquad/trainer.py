"""On-policy training for the residual policy plus its auxiliary nets.

One trainer step collects a fixed-length rollout from the vectorized
environment, then updates four learners from it:

* residual actor, clipped-surrogate policy gradient with GAE,
* privileged critic, regression on the GAE returns,
* state estimator, supervised on simulator ground truth,
* power predictor, supervised on per-window mean power of the gait that
  was actually executed.

Gait selection during collection draws from the predictor's softmax with
an annealed temperature, so early training explores all gaits and late
training concentrates on the cheap ones.

Everything is plain numpy with the hand-written gradients from nets.py;
given the same seed and config the run is bit-for-bit reproducible.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import (SELECTION_PERIOD, TemperatureSchedule, make_predictor,
                     select_gait, update_predictor)
from .env import VecGaitEnv
from .gait_core import DRIVING, GAIT_NAMES, ResidualBounds
from .nets import Adam, RunningNorm, clip_grad_norm, save_net
from .policy import (ACT_DIM, ESTIMATOR_INPUT_DIM, OBS_DIM, PRIV_DIM,
                     PrivilegedCritic, ResidualActor, StateEstimator,
                     assemble_privileged)
from .robot_model import ConfigError, RobotConfig
from .simulator import DisturbanceSchedule, TerrainModel


@dataclass
class TrainConfig:
    n_envs: int = 64
    epochs: int = 300
    steps_per_epoch: int = 48
    gamma: float = 0.99
    lam: float = 0.95
    clip_ratio: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    estimator_lr: float = 1e-3
    predictor_lr: float = 1e-3
    update_epochs: int = 4
    minibatch_size: int = 512
    entropy_coef: float = 0.0
    init_log_std: float = -1.6
    max_grad_norm: float = 0.5
    kl_limit: float = 0.03
    seed: int = 0
    time_limit: float = 20.0
    initial_gait: int = DRIVING
    tau_start: float = 8.0
    tau_end: float = 0.5
    include_residual_penalty: bool = True
    push_interval: float = 15.0
    max_push: float = 0.0
    selection_period: int = SELECTION_PERIOD
    predictor_warmup: int = 256
    warmup_steps: int = 64
    checkpoint_every: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.n_envs < 1 or self.epochs < 1 or self.steps_per_epoch < 1:
            raise ConfigError("n_envs, epochs and steps_per_epoch must be "
                              "positive")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ConfigError("gamma must lie in (0, 1] and lam in [0, 1]")
        if self.clip_ratio <= 0.0:
            raise ConfigError("clip_ratio must be positive")
        if self.tau_start <= 0.0 or self.tau_end <= 0.0:
            raise ConfigError("selection temperatures must be positive")
        if not np.isfinite(self.init_log_std):
            raise ConfigError("init_log_std must be finite")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(
                f"unknown training fields: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


class SampleBuffer:
    """Fixed-size ring buffer of (observation, gait, power) triples."""

    def __init__(self, capacity: int = 8192, obs_dim: int = OBS_DIM):
        self.obs = np.zeros((capacity, obs_dim))
        self.gait = np.zeros(capacity, dtype=int)
        self.power = np.zeros(capacity)
        self.capacity = capacity
        self.idx = 0
        self.count = 0

    def push(self, obs, gait, power):
        obs = np.atleast_2d(obs)
        gait = np.atleast_1d(gait)
        power = np.atleast_1d(power)
        for o, g, p in zip(obs, gait, power):
            if not np.isfinite(p):
                continue
            self.obs[self.idx] = o
            self.gait[self.idx] = g
            self.power[self.idx] = p
            self.idx = (self.idx + 1) % self.capacity
            self.count = min(self.count + 1, self.capacity)

    def sample(self, size: int, rng) -> tuple:
        ids = rng.integers(0, self.count, size=size)
        return self.obs[ids], self.gait[ids], self.power[ids]


def compute_gae(rewards, values, last_value, dones, timeouts, gamma, lam):
    """Generalized advantage estimation over a (T, n) rollout.

    Episodes that end by termination contribute no value beyond their last
    step.  Episodes cut by the time limit are bootstrapped with the value
    of the state the last action was taken from, which is the best
    in-batch stand-in since the post-reset observation belongs to a new
    episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    timeouts = np.asarray(timeouts, dtype=bool)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    rewards = rewards + gamma * values[:T] * timeouts
    lastgaelam = np.zeros(rewards.shape[1])
    for t in reversed(range(T)):
        next_value = last_value if t == T - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        lastgaelam = delta + gamma * lam * nonterminal * lastgaelam
        adv[t] = lastgaelam
    returns = adv + values[:T]
    return adv, returns


def _actor_update(actor, opt, obs_n, w, logp_old, adv, cfg, rng):
    """Minibatched clipped-surrogate update.  Returns diagnostics."""
    size = obs_n.shape[0]
    sigma_floor = 1e-8
    stats = {"actor_loss": 0.0, "kl": 0.0, "clip_frac": 0.0}
    batches = 0
    stop = False
    for _ in range(cfg.update_epochs):
        order = rng.permutation(size)
        for start in range(0, size, cfg.minibatch_size):
            mb = order[start:start + cfg.minibatch_size]
            logp, u, cache = actor.logp_cached(obs_n[mb], w[mb])
            kl = float(np.mean(logp_old[mb] - logp))
            if kl > 1.5 * cfg.kl_limit:
                stop = True
                break
            sigma = np.exp(actor.log_std)
            z = (w[mb] - u) / np.maximum(sigma, sigma_floor)
            ratio = np.exp(logp - logp_old[mb])
            a = adv[mb]
            clipped = np.clip(ratio, 1.0 - cfg.clip_ratio,
                              1.0 + cfg.clip_ratio)
            surr = np.minimum(ratio * a, clipped * a)
            # gradient of -surr w.r.t. logp: active only where the
            # unclipped branch is the binding one
            active = np.where(a >= 0.0, ratio <= 1.0 + cfg.clip_ratio,
                              ratio >= 1.0 - cfg.clip_ratio)
            coef = np.where(active, ratio * a, 0.0) / mb.size
            grad_u = -coef[:, None] * (z / sigma)
            grad_logstd = -(coef[:, None] * (z**2 - 1.0)).sum(axis=0)
            grad_logstd -= cfg.entropy_coef
            grads, _ = actor.net.backward(cache, grad_u)
            grads = grads + [grad_logstd]
            clip_grad_norm(grads, cfg.max_grad_norm)
            opt.step(grads)
            stats["actor_loss"] += float(-np.mean(surr))
            stats["kl"] = kl
            stats["clip_frac"] += float(np.mean(
                np.abs(ratio - 1.0) > cfg.clip_ratio))
            batches += 1
        if stop:
            break
    if batches:
        stats["actor_loss"] /= batches
        stats["clip_frac"] /= batches
    return stats


def _critic_update(critic, opt, x, returns, cfg, rng):
    size = x.shape[0]
    total = 0.0
    batches = 0
    for _ in range(cfg.update_epochs):
        order = rng.permutation(size)
        for start in range(0, size, cfg.minibatch_size):
            mb = order[start:start + cfg.minibatch_size]
            v, cache = critic.net.forward_cached(x[mb])
            err = v[:, 0] - returns[mb]
            loss = float(np.mean(err**2))
            grad = (2.0 * err / mb.size)[:, None]
            grads, _ = critic.net.backward(cache, grad)
            clip_grad_norm(grads, cfg.max_grad_norm)
            opt.step(grads)
            total += loss
            batches += 1
    return total / max(batches, 1)


def _regression_update(net, opt, x, y, minibatch, passes, max_grad_norm, rng):
    size = x.shape[0]
    loss = 0.0
    for _ in range(passes):
        order = rng.permutation(size)
        for start in range(0, size, minibatch):
            mb = order[start:start + minibatch]
            out, cache = net.forward_cached(x[mb])
            err = out - y[mb]
            loss = float(np.mean(err**2))
            grads, _ = net.backward(cache, 2.0 * err / err.size)
            clip_grad_norm(grads, max_grad_norm)
            opt.step(grads)
    return loss


def train(cfg: TrainConfig, robot: RobotConfig = None,
          terrain: TerrainModel = None, run_dir: str = None,
          verbose: bool = False) -> dict:
    """Runs the full loop and returns nets, norms and the logged curves."""
    robot = robot if robot is not None else RobotConfig.default()
    terrain = terrain if terrain is not None else TerrainModel()
    master = np.random.default_rng(cfg.seed)
    seeds = master.integers(0, 2**31 - 1, size=8)
    rng_actor = np.random.default_rng(seeds[0])
    rng_sel = np.random.default_rng(seeds[1])
    rng_shuffle = np.random.default_rng(seeds[2])
    rng_init = np.random.default_rng(seeds[3])

    bounds = ResidualBounds()
    actor = ResidualActor(bounds, rng=rng_init,
                          init_log_std=cfg.init_log_std)
    critic = PrivilegedCritic(rng=rng_init)
    estimator = StateEstimator(rng=rng_init)
    predictor = make_predictor(OBS_DIM)

    opt_actor = Adam(actor.parameters(), lr=cfg.actor_lr)
    opt_critic = Adam(critic.net.parameters(), lr=cfg.critic_lr)
    opt_est = Adam(estimator.net.parameters(), lr=cfg.estimator_lr)
    opt_pred = Adam(predictor.parameters(), lr=cfg.predictor_lr)

    obs_norm = RunningNorm(OBS_DIM)
    priv_norm = RunningNorm(PRIV_DIM)
    est_norm = RunningNorm(ESTIMATOR_INPUT_DIM)

    push = None
    if cfg.max_push > 0.0:
        push = DisturbanceSchedule(interval=cfg.push_interval,
                                   max_push=cfg.max_push, seed=cfg.seed)
    env = VecGaitEnv(robot, n_envs=cfg.n_envs, seed=cfg.seed,
                     terrain=terrain, bounds=bounds,
                     time_limit=cfg.time_limit,
                     initial_gait=cfg.initial_gait, push_schedule=push,
                     selection_period=cfg.selection_period,
                     include_residual_penalty=cfg.include_residual_penalty)
    env.estimate_provider = lambda flats: estimator.net.forward(
        est_norm.normalize(flats))

    schedule = TemperatureSchedule(cfg.tau_start, cfg.tau_end, cfg.epochs)
    power_buffer = SampleBuffer()
    tau_now = [cfg.tau_start]

    def selector(sel_obs):
        if power_buffer.count < cfg.predictor_warmup:
            return rng_sel.integers(0, len(GAIT_NAMES), size=len(sel_obs))
        p_est = predictor.forward(obs_norm.normalize(sel_obs))
        return select_gait(p_est, tau_now[0], rng_sel)

    env.gait_selector = selector

    T, n = cfg.steps_per_epoch, cfg.n_envs
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w") as fh:
            json.dump({"train": cfg.to_dict()}, fh, indent=2)
        if cfg.checkpoint_every:
            os.makedirs(os.path.join(run_dir, "checkpoints"), exist_ok=True)

    obs = env.reset_all()

    # burn-in: stagger episode progress and prime the normalizers so the
    # first logged epoch sees the same state distribution as later ones
    if cfg.warmup_steps > 0:
        warm = np.zeros((cfg.warmup_steps, n, OBS_DIM))
        warm_priv = np.zeros((cfg.warmup_steps, n, PRIV_DIM))
        warm_est = np.zeros((cfg.warmup_steps, n, ESTIMATOR_INPUT_DIM))
        for t in range(cfg.warmup_steps):
            warm[t] = obs
            warm_priv[t] = assemble_privileged(terrain,
                                               env.sim_state.contact_forces,
                                               env.active_push)
            action, _, _ = actor.sample(obs_norm.normalize(obs), rng_actor)
            obs, _, _, info = env.step(action)
            warm_est[t] = info["est_input"]
        obs_norm.update(warm.reshape(-1, OBS_DIM))
        priv_norm.update(warm_priv.reshape(-1, PRIV_DIM))
        est_norm.update(warm_est.reshape(-1, ESTIMATOR_INPUT_DIM))

    window_power = np.zeros(n)
    window_len = np.zeros(n, dtype=int)
    window_obs = np.zeros((n, OBS_DIM))
    window_gait = np.zeros(n, dtype=int)
    window_open = np.zeros(n, dtype=bool)

    curves = []
    ep_return = np.zeros(n)
    ep_len = np.zeros(n, dtype=int)
    finished_returns = []
    finished_lens = []
    t_start = time.time()

    for epoch in range(cfg.epochs):
        tau_now[0] = schedule.temperature(epoch)
        buf_obs = np.zeros((T, n, OBS_DIM))
        buf_priv = np.zeros((T, n, PRIV_DIM))
        buf_w = np.zeros((T, n, ACT_DIM))
        buf_logp = np.zeros((T, n))
        buf_val = np.zeros((T, n))
        buf_rew = np.zeros((T, n))
        buf_done = np.zeros((T, n), dtype=bool)
        buf_timeout = np.zeros((T, n), dtype=bool)
        est_x = np.zeros((T, n, ESTIMATOR_INPUT_DIM))
        est_y = np.zeros((T, n, 3))
        power_sum = 0.0

        for t in range(T):
            priv = assemble_privileged(terrain,
                                       env.sim_state.contact_forces,
                                       env.active_push)
            obs_n = obs_norm.normalize(obs)
            priv_n = priv_norm.normalize(priv)
            action, w, logp = actor.sample(obs_n, rng_actor)
            value = critic.value(obs_n, priv_n)

            buf_obs[t] = obs
            buf_priv[t] = priv
            buf_w[t] = w
            buf_logp[t] = logp
            buf_val[t] = value

            obs, breakdown, done, info = env.step(action)
            buf_rew[t] = breakdown.total
            buf_done[t] = done
            buf_timeout[t] = info["timeout"]
            est_x[t] = info["est_input"]
            est_y[t] = info["est_target"]
            power_sum += float(np.mean(info["power"]))

            ep_return += breakdown.total
            ep_len += 1
            if done.any():
                ids = np.flatnonzero(done)
                finished_returns.extend(ep_return[ids].tolist())
                finished_lens.extend(ep_len[ids].tolist())
                ep_return[ids] = 0.0
                ep_len[ids] = 0
                window_open[ids] = False

            new = info["new_window"]
            if new.any():
                ids = np.flatnonzero(new)
                closing = ids[window_open[ids] & (window_len[ids] > 0)]
                if closing.size:
                    power_buffer.push(
                        window_obs[closing], window_gait[closing],
                        window_power[closing] / window_len[closing])
                window_obs[ids] = info["selection_obs"][ids]
                window_gait[ids] = env.gait_state.active_gait[ids]
                window_power[ids] = 0.0
                window_len[ids] = 0
                window_open[ids] = True
            window_power += info["power"]
            window_len += 1

        final_obs_n = obs_norm.normalize(obs)
        final_priv = assemble_privileged(terrain,
                                         env.sim_state.contact_forces,
                                         env.active_push)
        last_value = critic.value(final_obs_n, priv_norm.normalize(final_priv))
        adv, returns = compute_gae(buf_rew, buf_val, last_value, buf_done,
                                   buf_timeout, cfg.gamma, cfg.lam)

        flat_obs_n = obs_norm.normalize(buf_obs.reshape(T * n, OBS_DIM))
        flat_priv_n = priv_norm.normalize(buf_priv.reshape(T * n, PRIV_DIM))
        flat_w = buf_w.reshape(T * n, ACT_DIM)
        flat_logp = buf_logp.reshape(T * n)
        flat_adv = adv.reshape(T * n)
        flat_ret = returns.reshape(T * n)
        flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)

        ppo_stats = _actor_update(actor, opt_actor, flat_obs_n, flat_w,
                                  flat_logp, flat_adv, cfg, rng_shuffle)
        critic_loss = _critic_update(
            critic, opt_critic,
            np.concatenate([flat_obs_n, flat_priv_n], axis=-1), flat_ret,
            cfg, rng_shuffle)
        est_loss = _regression_update(
            estimator.net, opt_est,
            est_norm.normalize(est_x.reshape(T * n, ESTIMATOR_INPUT_DIM)),
            est_y.reshape(T * n, 3), 1024, 2, cfg.max_grad_norm, rng_shuffle)
        pred_loss = float("nan")
        if power_buffer.count >= cfg.predictor_warmup:
            for _ in range(4):
                px, pg, pp = power_buffer.sample(512, rng_shuffle)
                pred_loss = update_predictor(predictor, opt_pred,
                                             obs_norm.normalize(px), pg, pp)

        obs_norm.update(buf_obs.reshape(T * n, OBS_DIM))
        priv_norm.update(buf_priv.reshape(T * n, PRIV_DIM))
        est_norm.update(est_x.reshape(T * n, ESTIMATOR_INPUT_DIM))

        row = {
            "epoch": epoch,
            "reward_mean": float(buf_rew.mean()),
            "ep_return": float(np.mean(finished_returns[-100:]))
            if finished_returns else float("nan"),
            "ep_len": float(np.mean(finished_lens[-100:]))
            if finished_lens else float("nan"),
            "actor_loss": ppo_stats["actor_loss"],
            "critic_loss": critic_loss,
            "kl": ppo_stats["kl"],
            "clip_frac": ppo_stats["clip_frac"],
            "log_std_mean": float(actor.log_std.mean()),
            "estimator_loss": est_loss,
            "predictor_loss": pred_loss,
            "temperature": tau_now[0],
            "mean_power": power_sum / T,
        }
        curves.append(row)
        if verbose and (epoch % cfg.log_every == 0 or
                        epoch == cfg.epochs - 1):
            fps = (epoch + 1) * T * n / (time.time() - t_start)
            print(f"epoch {epoch:4d}  reward {row['reward_mean']:+.4f}  "
                  f"kl {row['kl']:.4f}  std {np.exp(row['log_std_mean']):.3f}  "
                  f"power {row['mean_power']:.2f}W  tau {row['temperature']:.2f}  "
                  f"fps {fps:,.0f}")
        if run_dir and cfg.checkpoint_every and \
                (epoch + 1) % cfg.checkpoint_every == 0:
            save_net(os.path.join(run_dir, "checkpoints",
                                  f"actor_{epoch + 1:05d}.npz"),
                     actor.net, extras=_actor_extras(actor, obs_norm))

    result = {
        "actor": actor, "critic": critic, "estimator": estimator,
        "predictor": predictor, "obs_norm": obs_norm,
        "priv_norm": priv_norm, "est_norm": est_norm,
        "curves": curves, "run_dir": run_dir,
    }
    if run_dir:
        _write_artifacts(run_dir, result, cfg)
    return result


def _actor_extras(actor, obs_norm):
    extras = {"log_std": actor.log_std,
              "bounds": actor.scale}
    for key, arr in obs_norm.state_arrays().items():
        extras[f"obs_norm_{key}"] = arr
    return extras


def _write_artifacts(run_dir, result, cfg):
    actor = result["actor"]
    save_net(os.path.join(run_dir, "actor.npz"), actor.net,
             extras=_actor_extras(actor, result["obs_norm"]))
    critic_extras = {}
    for key, arr in result["priv_norm"].state_arrays().items():
        critic_extras[f"priv_norm_{key}"] = arr
    for key, arr in result["obs_norm"].state_arrays().items():
        critic_extras[f"obs_norm_{key}"] = arr
    save_net(os.path.join(run_dir, "critic.npz"), result["critic"].net,
             extras=critic_extras)
    est_extras = {}
    for key, arr in result["est_norm"].state_arrays().items():
        est_extras[f"est_norm_{key}"] = arr
    save_net(os.path.join(run_dir, "estimator.npz"),
             result["estimator"].net, extras=est_extras)
    pred_extras = {"tau_end": np.array([cfg.tau_end])}
    for key, arr in result["obs_norm"].state_arrays().items():
        pred_extras[f"obs_norm_{key}"] = arr
    save_net(os.path.join(run_dir, "predictor.npz"), result["predictor"],
             extras=pred_extras)
    with open(os.path.join(run_dir, "curves.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(result["curves"][0]))
        writer.writeheader()
        writer.writerows(result["curves"])
