"""Vectorized closed-loop environment: gait clock, residual blending, IK,
simulation substeps, reward, resets, and per-horizon gait selection.

The control loop runs at 50 Hz; each control tick advances the simulator by
20 substeps.  Gait selection runs once per 50-tick horizon through a
caller-provided selector (none means the gait never changes), and the
estimate slot of the observation comes from a caller-provided callable
(none means ground truth).
"""

from __future__ import annotations

import numpy as np

from . import gait_core, policy as policy_mod, simulator as sim
from .energy import SELECTION_PERIOD, instantaneous_power
from .gait_core import DRIVING, GaitLibrary, GaitState, ResidualBounds
from .reward import compute_reward
from .robot_model import RobotConfig, leg_inverse_kinematics
from .simulator import (DisturbanceSchedule, SimState, TerrainModel,
                        check_termination, collision_count, quat_rotate_inverse,
                        yaw_rate_cw)

CONTROL_DT = 0.02
SUBSTEPS = 20

COMMAND_RANGES = np.array([[-1.0, 1.0], [-0.7, 0.7], [-0.7, 0.7]])
ZERO_COMMAND_PROB = 0.1


class VecGaitEnv:
    def __init__(self, cfg: RobotConfig, n_envs: int = 1, seed: int = 0,
                 terrain: TerrainModel = None, library: GaitLibrary = None,
                 bounds: ResidualBounds = None, time_limit: float = 20.0,
                 initial_gait: int = DRIVING, fixed_command=None,
                 command_ranges=COMMAND_RANGES,
                 zero_command_prob: float = ZERO_COMMAND_PROB,
                 push_schedule: DisturbanceSchedule = None,
                 selection_period: int = SELECTION_PERIOD,
                 include_residual_penalty: bool = True):
        self.cfg = cfg
        self.n = n_envs
        self.terrain = terrain if terrain is not None else TerrainModel()
        self.library = library if library is not None else GaitLibrary.default()
        self.bounds = bounds if bounds is not None else ResidualBounds()
        self.time_limit = time_limit
        self.initial_gait = initial_gait
        self.fixed_command = (None if fixed_command is None
                              else np.asarray(fixed_command, dtype=float))
        self.command_ranges = np.asarray(command_ranges, dtype=float)
        self.zero_command_prob = zero_command_prob
        self.push_schedule = push_schedule
        self.selection_period = selection_period
        self.include_residual_penalty = include_residual_penalty
        self.rng = np.random.default_rng(seed)

        # Wired by the trainer / runtime.  Both consume raw (unnormalized)
        # inputs and are free to normalize internally.
        self.estimate_provider = None   # history flats (n, 570) -> (n, 3)
        self.gait_selector = None       # observations (m, 98) -> (m,) gait ids

        self.sim_state = SimState.standing(cfg, n_envs,
                                           self.terrain.ground_height)
        self.gait_state = GaitState.initial(self.library, initial_gait, n_envs)
        self.history = policy_mod.ObservationHistory(n_envs)
        self.command = np.zeros((n_envs, 3))
        self.v_nominal = np.zeros((n_envs, 4))
        self.last_dphi = np.zeros((n_envs, 4))
        self.act_prev = np.zeros((n_envs, policy_mod.ACT_DIM))
        self.act_prev2 = np.zeros((n_envs, policy_mod.ACT_DIM))
        self.sel_countdown = np.zeros(n_envs, dtype=int)
        self.next_push = np.full(n_envs, np.inf)
        self.active_push = np.zeros((n_envs, 3))
        self.latest_obs = None

    # -- lifecycle -----------------------------------------------------------

    def reset_all(self) -> np.ndarray:
        self._reset_rows(np.arange(self.n))
        obs, new_window, sel_obs = self._observe_and_select(first=True)
        self.latest_obs = obs
        self._last_new_window = new_window
        self._last_selection_obs = sel_obs
        return obs

    def _reset_rows(self, ids):
        fresh = SimState.standing(self.cfg, len(ids),
                                  self.terrain.ground_height)
        for name in ("base_pos", "base_quat", "base_lin_vel", "base_ang_vel",
                     "q", "qd", "contact", "contact_forces", "pid_integral",
                     "pid_prev_error", "time"):
            getattr(self.sim_state, name)[ids] = getattr(fresh, name)
        self.gait_state = gait_core.switch_gait(
            self.gait_state, self.initial_gait, self.library, ids)
        self.command[ids] = self._sample_commands(len(ids))
        self.v_nominal[ids] = 0.0
        self.last_dphi[ids] = 0.0
        self.act_prev[ids] = 0.0
        self.act_prev2[ids] = 0.0
        self.sel_countdown[ids] = 0
        self.active_push[ids] = 0.0
        if self.push_schedule is not None:
            self.next_push[ids] = self.push_schedule.interval
        else:
            self.next_push[ids] = np.inf

    def _sample_commands(self, count):
        if self.fixed_command is not None:
            return np.tile(self.fixed_command, (count, 1))
        lo, hi = self.command_ranges[:, 0], self.command_ranges[:, 1]
        cmd = self.rng.uniform(lo, hi, size=(count, 3))
        zero = self.rng.random(count) < self.zero_command_prob
        cmd[zero] = 0.0
        return cmd

    def set_command(self, command, env_ids=None):
        ids = np.arange(self.n) if env_ids is None else env_ids
        self.command[ids] = np.asarray(command, dtype=float)

    # -- stepping ------------------------------------------------------------

    def step(self, action):
        """One 50 Hz control tick for the whole batch.

        action: (n, 20) physical residuals.  Returns (obs, reward breakdown,
        done, info).
        """
        action = np.asarray(action, dtype=float).reshape(self.n,
                                                         policy_mod.ACT_DIM)
        self.active_push[:] = 0.0
        self._maybe_push()

        freq = self.library.frequencies[self.gait_state.active_gait]
        self.gait_state = gait_core.advance_phase(self.gait_state, freq,
                                                  CONTROL_DT)
        p_des, v_des, self.gait_state, dphi = policy_mod.apply_action(
            action, self.gait_state, self.v_nominal, self.library, self.cfg,
            self.bounds)
        self.last_dphi = dphi
        q_des = self._leg_targets(p_des)

        executed_gait = self.gait_state.active_gait.copy()
        prev_qd = self.sim_state.qd.copy()
        power, tau_mean = self._control_cycle(q_des, v_des)

        st = self.sim_state
        joint_acc = (st.qd - prev_qd) / CONTROL_DT
        collisions = collision_count(st, self.cfg, self.terrain.ground_height)
        act_norm = policy_mod.normalized_action(
            np.clip(action, -self.bounds.as_vector(), self.bounds.as_vector()),
            self.bounds)
        lin_vel_body = quat_rotate_inverse(st.base_quat, st.base_lin_vel)
        ang_vel_body = quat_rotate_inverse(st.base_quat, st.base_ang_vel)
        grav_body = quat_rotate_inverse(
            st.base_quat, np.array([0.0, 0.0, -1.0]))
        breakdown = compute_reward(
            self.command, lin_vel_body, yaw_rate_cw(st), grav_body,
            ang_vel_body, joint_acc, tau_mean, act_norm, self.act_prev,
            self.act_prev2, collisions, joint_vel=st.qd,
            include_residual_penalty=self.include_residual_penalty)
        self.act_prev2 = self.act_prev
        self.act_prev = act_norm

        term = check_termination(st, self.cfg, self.time_limit,
                                 self.terrain.ground_height)
        done = term != sim.RUNNING
        timeout = term == sim.TIMEOUT
        done_ids = np.flatnonzero(done)
        if done_ids.size:
            self._reset_rows(done_ids)

        self.sel_countdown -= 1
        obs, new_window, sel_obs = self._observe_and_select(reset_rows=done_ids)
        self.latest_obs = obs

        info = {
            "power": power,
            "gait": executed_gait,
            "new_window": new_window,
            "selection_obs": sel_obs,
            "est_input": self.history.flat(),
            "est_target": self._ground_truth_estimate(),
            "timeout": timeout,
            "collisions": collisions,
            "push": self.active_push.copy(),
            "torques": tau_mean,
        }
        return obs, breakdown, done, info

    def _maybe_push(self):
        if self.push_schedule is None or self.push_schedule.max_push < 0:
            return
        due = np.flatnonzero(self.sim_state.time >= self.next_push)
        if due.size == 0:
            return
        angle = self.rng.uniform(0.0, 2.0 * np.pi, size=due.size)
        mag = self.rng.uniform(0.0, self.push_schedule.max_push, size=due.size)
        dir_base = np.stack([np.cos(angle), np.sin(angle),
                             np.zeros(due.size)], axis=-1)
        dir_world = sim.quat_rotate(self.sim_state.base_quat[due], dir_base)
        push = mag[:, None] * dir_world
        self.sim_state.base_lin_vel[due] += push
        self.active_push[due] = push
        self.next_push[due] += self.push_schedule.interval

    def _leg_targets(self, p_des_contact):
        """Contact-point targets (hip frames) -> clamped joint targets (n, 12)."""
        centers = np.array(p_des_contact, copy=True)
        centers[..., 2] += self.cfg.wheel_radius
        q, _ = leg_inverse_kinematics(centers, self.cfg)
        q = q.reshape(self.n, 12)
        limits = self.cfg.leg_joint_limits
        return np.clip(q, limits[:, 0], limits[:, 1])

    def _control_cycle(self, q_des, v_des):
        st = self.sim_state
        power_acc = np.zeros(self.n)
        tau_acc = np.zeros((self.n, 16))
        for _ in range(SUBSTEPS):
            st, diag = sim.step(st, q_des, v_des, self.terrain, self.cfg)
            power_acc += instantaneous_power(diag.torques, st.qd)
            tau_acc += diag.torques
        self.sim_state = st
        return power_acc / SUBSTEPS, tau_acc / SUBSTEPS

    # -- observations --------------------------------------------------------

    def _ground_truth_estimate(self):
        st = self.sim_state
        vel_body = quat_rotate_inverse(st.base_quat, st.base_lin_vel)
        height = (st.base_pos[:, 2] - self.terrain.ground_height)[:, None]
        return np.concatenate([vel_body[:, :2], height], axis=-1)

    def _partial_obs(self):
        st = self.sim_state
        ang_body = quat_rotate_inverse(st.base_quat, st.base_ang_vel)
        grav_body = quat_rotate_inverse(st.base_quat,
                                        np.array([0.0, 0.0, -1.0]))
        active = self.gait_state.active_gait
        self.v_nominal = gait_core.nominal_wheel_velocity(
            self.command, st.contact, self.v_nominal, self.cfg)
        gait_info = policy_mod.assemble_gait_info(
            self.gait_state.phases, self.last_dphi,
            self.library.frequencies[active],
            self.library.duty_factors[active], self.v_nominal)
        return policy_mod.assemble_partial_observation(
            ang_body, grav_body, st.q[:, :12], st.qd, gait_info, self.command,
            self.act_prev, self.act_prev2)

    def _estimates(self, rows=None):
        flats = self.history.flat()
        if self.estimate_provider is None:
            z = self._ground_truth_estimate()
            return z if rows is None else z[rows]
        if rows is None:
            return self.estimate_provider(flats)
        return self.estimate_provider(flats[rows])

    def _observe_and_select(self, reset_rows=None, first: bool = False):
        partial = self._partial_obs()
        if first:
            self.history.reset(np.arange(self.n), partial)
        else:
            self.history.push(partial)
            # Rows that just reset restart their history from scratch.
            if reset_rows is not None and len(reset_rows):
                self.history.reset(reset_rows, partial[reset_rows])
        obs = policy_mod.insert_estimate(partial, self._estimates())

        new_window = self.sel_countdown <= 0
        sel_rows = np.flatnonzero(new_window)
        selection_obs = obs.copy()
        if sel_rows.size and self.gait_selector is not None:
            chosen = np.asarray(self.gait_selector(obs[sel_rows]), dtype=int)
            changed = chosen != self.gait_state.active_gait[sel_rows]
            switch_rows = sel_rows[changed]
            if switch_rows.size:
                self.gait_state = gait_core.switch_gait(
                    self.gait_state, chosen[changed], self.library,
                    switch_rows)
                self.last_dphi[switch_rows] = 0.0
                partial2 = self._partial_obs()
                self.history.buf[switch_rows, 0] = partial2[switch_rows]
                obs2 = policy_mod.insert_estimate(
                    partial2[switch_rows], self._estimates(switch_rows))
                obs[switch_rows] = obs2
        self.sel_countdown[sel_rows] = self.selection_period
        return obs, new_window, selection_obs
