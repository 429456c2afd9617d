"""Evaluation harnesses and trained-artifact loading.

Everything here consumes the environment through the same public surface
the trainer uses, so evaluation numbers reflect exactly what training
saw.  Reports serialize to plain JSON for the CLI and the test suite.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import select_gait
from .env import CONTROL_DT, VecGaitEnv
from .gait_core import DRIVING, GAIT_NAMES
from .nets import RunningNorm, load_net
from .policy import ACT_DIM, OBS_ESTIMATE
from .robot_model import RobotConfig
from .simulator import (TerrainModel, quat_rotate_inverse, tilt_angle,
                        yaw_rate_cw)


@dataclass
class EvalReport:
    """Serializable summary of one evaluation run."""

    kind: str
    duration: float
    metrics: dict = field(default_factory=dict)
    per_gait: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(**data)


class ZeroResidualPolicy:
    """Baseline: the nominal gait controller alone."""

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return np.zeros((np.atleast_2d(obs).shape[0], ACT_DIM))


class LearnedPolicy:
    """Deterministic actor loaded from a weight file, with its norms."""

    def __init__(self, net, log_std, bounds_vec, obs_norm):
        self.net = net
        self.scale = bounds_vec
        self.obs_norm = obs_norm

    @classmethod
    def load(cls, path: str) -> "LearnedPolicy":
        net, extras = load_net(path)
        norm = RunningNorm.from_arrays({
            "mean": extras["obs_norm_mean"],
            "var": extras["obs_norm_var"],
            "count": extras["obs_norm_count"]})
        return cls(net, extras.get("log_std"), extras["bounds"], norm)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        u = self.net.forward(self.obs_norm.normalize(obs))
        return self.scale * np.tanh(u)


@dataclass
class PolicyBundle:
    """Actor plus the auxiliary nets the environment loop needs."""

    policy: object
    estimate_provider: object = None
    gait_selector: object = None

    @classmethod
    def load(cls, run_dir: str, temperature: float = None) -> "PolicyBundle":
        policy = LearnedPolicy.load(os.path.join(run_dir, "actor.npz"))
        est_net, est_extras = load_net(os.path.join(run_dir, "estimator.npz"))
        est_norm = RunningNorm.from_arrays({
            "mean": est_extras["est_norm_mean"],
            "var": est_extras["est_norm_var"],
            "count": est_extras["est_norm_count"]})

        def estimate(flats):
            return est_net.forward(est_norm.normalize(flats))

        pred_path = os.path.join(run_dir, "predictor.npz")
        selector = None
        if os.path.exists(pred_path):
            pred_net, pred_extras = load_net(pred_path)
            pred_norm = RunningNorm.from_arrays({
                "mean": pred_extras["obs_norm_mean"],
                "var": pred_extras["obs_norm_var"],
                "count": pred_extras["obs_norm_count"]})
            tau = temperature
            if tau is None:
                tau = float(np.asarray(pred_extras.get(
                    "tau_end", [0.5])).ravel()[0])
            rng = np.random.default_rng(0)

            def selector(sel_obs):
                p_est = pred_net.forward(pred_norm.normalize(sel_obs))
                return select_gait(p_est, tau, rng)

        return cls(policy, estimate, selector)

    def attach(self, env: VecGaitEnv):
        env.estimate_provider = self.estimate_provider
        env.gait_selector = self.gait_selector


def _make_env(robot, n_envs, seed, command, terrain=None, push=None,
              initial_gait=DRIVING, use_selector=True, bundle=None,
              time_limit=1e9):
    env = VecGaitEnv(robot, n_envs=n_envs, seed=seed, terrain=terrain,
                     fixed_command=command, initial_gait=initial_gait,
                     push_schedule=push, time_limit=time_limit)
    if bundle is not None:
        env.estimate_provider = bundle.estimate_provider
        if use_selector:
            env.gait_selector = bundle.gait_selector
    return env


def eval_tracking(policy, robot: RobotConfig = None, duration: float = 8.0,
                  settle: float = 2.0, commands=None, seed: int = 0,
                  bundle: PolicyBundle = None, initial_gait=DRIVING,
                  terrain: TerrainModel = None) -> EvalReport:
    """Velocity-tracking error per commanded task, after a settling period.

    Yaw tracking is measured against the clockwise-positive yaw rate the
    command convention uses.
    """
    robot = robot if robot is not None else RobotConfig.default()
    if commands is None:
        commands = [[0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [-0.5, 0.0, 0.0],
                    [0.0, 0.0, 0.5], [0.5, 0.0, -0.3]]
    per_task = []
    for command in commands:
        env = _make_env(robot, 1, seed, command, terrain=terrain,
                        bundle=bundle, initial_gait=initial_gait)
        obs = env.reset_all()
        err = {"vx": [], "vy": [], "wz": []}
        steps = int(duration / CONTROL_DT)
        settle_steps = int(settle / CONTROL_DT)
        for k in range(steps):
            obs, _, done, info = env.step(policy(obs))
            if k < settle_steps:
                continue
            st = env.sim_state
            vel = quat_rotate_inverse(st.base_quat, st.base_lin_vel)[0]
            err["vx"].append(vel[0] - command[0])
            err["vy"].append(vel[1] - command[1])
            err["wz"].append(yaw_rate_cw(st)[0] - command[2])
        per_task.append({
            "command": list(map(float, command)),
            "mse_vx": float(np.mean(np.square(err["vx"]))),
            "mse_vy": float(np.mean(np.square(err["vy"]))),
            "mse_wz": float(np.mean(np.square(err["wz"]))),
            "mean_err_vx": float(np.mean(err["vx"])),
        })
    overall = float(np.mean([t["mse_vx"] + t["mse_vy"] + t["mse_wz"]
                             for t in per_task]))
    return EvalReport(kind="tracking", duration=duration,
                      metrics={"overall_mse": overall, "tasks": per_task})


def eval_energy(policy, robot: RobotConfig = None, duration: float = 20.0,
                command=(0.5, 0.0, 0.0), seed: int = 0,
                bundle: PolicyBundle = None, use_selector: bool = True,
                initial_gait=DRIVING,
                terrain: TerrainModel = None) -> EvalReport:
    """Mean locomotion power and the per-gait occupancy histogram."""
    robot = robot if robot is not None else RobotConfig.default()
    env = _make_env(robot, 1, seed, list(command), terrain=terrain,
                    bundle=bundle, use_selector=use_selector,
                    initial_gait=initial_gait)
    obs = env.reset_all()
    steps = int(duration / CONTROL_DT)
    powers = np.zeros(steps)
    occupancy = np.zeros(len(GAIT_NAMES))
    for k in range(steps):
        obs, _, done, info = env.step(policy(obs))
        powers[k] = info["power"][0]
        occupancy[info["gait"][0]] += 1
    per_gait = {name: {"fraction": float(occupancy[gid] / steps)}
                for gid, name in enumerate(GAIT_NAMES)}
    return EvalReport(
        kind="energy", duration=duration,
        metrics={"mean_power": float(powers.mean()),
                 "peak_power": float(powers.max()),
                 "command": list(map(float, command))},
        per_gait=per_gait)


def eval_robustness(policy, robot: RobotConfig = None,
                    push_magnitudes=(0.3, 0.5, 0.7), trials: int = 8,
                    command=(0.5, 0.0, 0.0), seed: int = 0,
                    bundle: PolicyBundle = None, initial_gait=DRIVING,
                    recovery_window: float = 5.0,
                    recovery_tilt_deg: float = 15.0,
                    terrain: TerrainModel = None) -> EvalReport:
    """Recovery rate under lateral velocity pushes of growing magnitude.

    A trial counts as recovered when, within the window after the push,
    the robot neither terminates nor ends the window tilted beyond the
    threshold.
    """
    robot = robot if robot is not None else RobotConfig.default()
    results = {}
    for mag in push_magnitudes:
        recovered = 0
        for trial in range(trials):
            env = _make_env(robot, 1, seed + trial, list(command),
                            terrain=terrain, bundle=bundle,
                            initial_gait=initial_gait)
            obs = env.reset_all()
            settle_steps = int(2.0 / CONTROL_DT)
            for _ in range(settle_steps):
                obs, _, done, _ = env.step(policy(obs))
            # deterministic push direction per trial, purely lateral flavor
            rng = np.random.default_rng(seed * 1000 + trial)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            dv = mag * np.array([np.cos(angle), np.sin(angle), 0.0])
            env.sim_state.base_lin_vel[0] += dv
            ok = True
            for _ in range(int(recovery_window / CONTROL_DT)):
                obs, _, done, info = env.step(policy(obs))
                if done[0] and not info["timeout"][0]:
                    ok = False
                    break
            if ok:
                tilt = float(np.degrees(tilt_angle(env.sim_state))[0])
                ok = tilt < recovery_tilt_deg
            recovered += int(ok)
        results[f"{mag:.2f}"] = recovered / trials
    return EvalReport(kind="robustness", duration=recovery_window,
                      metrics={"recovery_rate": results,
                               "trials": trials,
                               "command": list(map(float, command))})


def play(policy, robot: RobotConfig = None, duration: float = 10.0,
         command=(0.5, 0.0, 0.0), seed: int = 0,
         bundle: PolicyBundle = None, csv_path: str = None,
         initial_gait=DRIVING, terrain: TerrainModel = None) -> dict:
    """Rolls one episode and optionally streams a per-step CSV log."""
    robot = robot if robot is not None else RobotConfig.default()
    env = _make_env(robot, 1, seed, list(command), terrain=terrain,
                    bundle=bundle, initial_gait=initial_gait)
    obs = env.reset_all()
    steps = int(duration / CONTROL_DT)
    writer = None
    fh = None
    if csv_path:
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z", "vx", "vy", "wz_cw", "gait",
                         "power", "reward", "est_vx", "est_vy", "est_h"])
    total_reward = 0.0
    total_power = 0.0
    try:
        for k in range(steps):
            obs, breakdown, done, info = env.step(policy(obs))
            total_reward += float(breakdown.total[0])
            total_power += float(info["power"][0])
            if writer:
                st = env.sim_state
                vel = quat_rotate_inverse(st.base_quat, st.base_lin_vel)[0]
                est = obs[0, OBS_ESTIMATE]
                writer.writerow([
                    f"{st.time[0]:.3f}", f"{st.base_pos[0, 0]:.4f}",
                    f"{st.base_pos[0, 1]:.4f}", f"{st.base_pos[0, 2]:.4f}",
                    f"{vel[0]:.4f}", f"{vel[1]:.4f}",
                    f"{yaw_rate_cw(st)[0]:.4f}",
                    GAIT_NAMES[info["gait"][0]], f"{info['power'][0]:.3f}",
                    f"{breakdown.total[0]:.4f}", f"{est[0]:.4f}",
                    f"{est[1]:.4f}", f"{est[2]:.4f}"])
    finally:
        if fh:
            fh.close()
    return {"steps": steps, "mean_reward": total_reward / steps,
            "mean_power": total_power / steps}
