"""Hand-written residual controllers for data collection and harness tests.

These are not learned policies.  They exist to produce deterministic,
gait-dependent effort so the power predictor has something meaningful to
fit before any reinforcement learning has happened, and to exercise the
full control stack in integration tests.
"""

import numpy as np

from .gait_core import ResidualBounds
from .policy import ACT_DIM, OBS_CMD, OBS_GAIT, OBS_GRAVITY
from .robot_model import LEG_SIDE


class ScriptedResidualController:
    """Maps observations to residual actions for lateral motion.

    Forward and yaw commands are left entirely to the nominal controller
    (zero residual).  Lateral commands are realized differently per gait:

    * trotting crab-steps: swing feet relocate along the commanded
      direction with a cosine profile (stationary at lift-off and
      touchdown, so loaded feet are never dragged), stance feet sweep
      back linearly and push the body sideways,
    * walking steps in place with a small roll-levelling term on stance
      feet; its support polygon is too narrow for open-loop crabbing,
    * driving has no swing phase to relocate feet with, so the controller
      pumps the body up and down against the ground.  Deliberately
      wasteful; the point is that the power predictor can see how
      expensive the attempt is.
    """

    CRAB_GAIN = 0.3
    CRAB_CAP = 0.05
    LEVEL_GAIN = -0.3
    LEVEL_CAP = 0.04
    PUMP_AMPLITUDE = 0.06
    # fast enough that pumping costs more than a gait transition ever does,
    # otherwise a one-window-ahead selector rationally refuses to switch
    PUMP_FREQUENCY = 3.0

    def __init__(self, n_envs: int, bounds=None, control_dt=0.02):
        self.n = int(n_envs)
        self.bounds = bounds if bounds is not None else ResidualBounds()
        self.control_dt = float(control_dt)
        self.t = np.zeros(self.n)

    def reset(self, env_ids=None):
        if env_ids is None:
            self.t[:] = 0.0
        else:
            self.t[env_ids] = 0.0

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=float)
        n = obs.shape[0]
        gait = obs[:, OBS_GAIT]
        sin = gait[:, 0:4]
        cos = gait[:, 4:8]
        freq = gait[:, 12]
        duty = gait[:, 13]
        gravity_y = obs[:, OBS_GRAVITY][:, 1]
        vy = obs[:, OBS_CMD][:, 1]

        phases = (np.arctan2(sin, cos) / (2.0 * np.pi)) % 1.0
        dp = np.zeros((n, 4, 3))

        legged = duty > 0.0
        # walking's duty factor sits below trotting's
        walking = legged & (duty < 0.3)
        trotting = legged & ~walking

        if legged.any():
            df = np.where(legged, duty, 0.5)
            f = np.where(freq > 1e-6, freq, 1.0)
            swing = phases < df[:, None]
            psi = np.clip(phases / df[:, None], 0.0, 1.0)
            chi = np.clip((phases - df[:, None]) / (1.0 - df[:, None]),
                          0.0, 1.0)

            # Crab step: the foot cycles between -half and +half along y
            # in the hip frame.  The linear stance sweep sets the body's
            # lateral speed.
            t_stance = (1.0 - df) / f
            half = np.clip(self.CRAB_GAIN * 0.5 * vy * t_stance,
                           -self.CRAB_CAP, self.CRAB_CAP)
            dy = np.where(swing, -half[:, None] * np.cos(np.pi * psi),
                          half[:, None] * (1.0 - 2.0 * chi))
            dp[:, :, 1] = np.where(trotting[:, None], dy, 0.0)

            level = np.clip(
                self.LEVEL_GAIN * gravity_y[:, None] * np.asarray(LEG_SIDE),
                -self.LEVEL_CAP, self.LEVEL_CAP)
            dp[:, :, 2] = np.where(walking[:, None] & ~swing, level, 0.0)

        pumping = ~legged & (np.abs(vy) > 1e-3)
        if pumping.any():
            dz = self.PUMP_AMPLITUDE * np.cos(
                2.0 * np.pi * self.PUMP_FREQUENCY * self.t[:n])
            dp[:, :, 2] = np.where(pumping, dz, dp[:, :, 2].T).T

        self.t[:n] += self.control_dt
        action = np.zeros((n, ACT_DIM))
        action[:, 4:16] = np.clip(dp, -self.bounds.foot_pos,
                                  self.bounds.foot_pos).reshape(n, 12)
        return action
