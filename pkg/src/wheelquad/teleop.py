"""WebSocket teleoperation service.

Wire protocol, JSON text frames on /ws:

  client -> server   {"type": "cmd", "vx": float, "vy": float, "wz": float}
  server -> client   {"type": "state", "t": float,
                      "base": {"pos": [3], "quat": [4], "vel": [3]},
                      "gait": str, "p_est": [3], "power": float,
                      "feet": [[3] x 4], "contacts": [bool x 4]}
  server -> client   {"type": "error", "msg": str}

Commands are clamped to the training ranges and the last writer wins,
whichever connection it came from.  The simulation runs at the control
rate scaled by the speed factor; state snapshots go out at 20 Hz of
simulated time.
"""

from __future__ import annotations

import asyncio
import contextlib
import json
import os

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .env import COMMAND_RANGES, CONTROL_DT, VecGaitEnv
from .gait_core import DRIVING, GAIT_NAMES
from .policy import ACT_DIM, OBS_ESTIMATE
from .robot_model import RobotConfig
from .simulator import TerrainModel, wheel_contact_points

SNAPSHOT_DT = 0.05


def _parse_command(raw: str):
    """Returns a clamped (vx, vy, wz) array or raises ValueError."""
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError:
        raise ValueError("not valid JSON")
    if not isinstance(msg, dict) or msg.get("type") != "cmd":
        raise ValueError("expected {\"type\": \"cmd\", ...}")
    try:
        cmd = np.array([float(msg["vx"]), float(msg["vy"]),
                        float(msg["wz"])])
    except (KeyError, TypeError, ValueError):
        raise ValueError("cmd needs numeric vx, vy, wz")
    if not np.all(np.isfinite(cmd)):
        raise ValueError("cmd needs numeric vx, vy, wz")
    return np.clip(cmd, COMMAND_RANGES[:, 0], COMMAND_RANGES[:, 1])


class TeleopSession:
    """One shared simulation plus the set of connected clients."""

    def __init__(self, robot=None, terrain=None, bundle=None, speed=1.0,
                 initial_gait=DRIVING, seed=0):
        self.robot = robot if robot is not None else RobotConfig.default()
        self.env = VecGaitEnv(self.robot, n_envs=1, seed=seed,
                              terrain=terrain, fixed_command=[0.0, 0.0, 0.0],
                              initial_gait=initial_gait, time_limit=1e9)
        self.policy = None
        if bundle is not None:
            bundle.attach(self.env)
            self.policy = bundle.policy
        self.speed = float(speed)
        self.obs = self.env.reset_all()
        self.last_info = None
        self.clients: set = set()
        self.locks: dict = {}
        self._task = None

    def set_command(self, cmd):
        self.env.command[0] = cmd

    def snapshot(self) -> dict:
        st = self.env.sim_state
        feet = wheel_contact_points(st, self.robot)[0]
        power = 0.0
        gait = int(np.atleast_1d(self.env.gait_state.active_gait)[0])
        if self.last_info is not None:
            power = float(self.last_info["power"][0])
            gait = int(self.last_info["gait"][0])
        est = self.obs[0, OBS_ESTIMATE]
        return {
            "type": "state",
            "t": float(st.time[0]),
            "base": {
                "pos": [float(v) for v in st.base_pos[0]],
                "quat": [float(v) for v in st.base_quat[0]],
                "vel": [float(v) for v in st.base_lin_vel[0]],
            },
            "gait": GAIT_NAMES[gait],
            "p_est": [float(v) for v in est],
            "power": power,
            "feet": [[float(v) for v in foot] for foot in feet],
            "contacts": [bool(c) for c in st.contact[0]],
        }

    def step(self):
        if self.policy is not None:
            action = self.policy(self.obs)
        else:
            action = np.zeros((1, ACT_DIM))
        self.obs, _, _, self.last_info = self.env.step(action)

    async def broadcast(self, payload: dict):
        dead = []
        for ws in list(self.clients):
            lock = self.locks.get(ws)
            try:
                async with lock:
                    await ws.send_json(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            self.clients.discard(ws)
            self.locks.pop(ws, None)

    async def run(self):
        """Steps the sim with absolute-deadline pacing and broadcasts."""
        loop = asyncio.get_running_loop()
        dt_wall = CONTROL_DT / max(self.speed, 1e-6)
        deadline = loop.time()
        next_snap = float(self.env.sim_state.time[0])
        while True:
            self.step()
            now_sim = float(self.env.sim_state.time[0])
            if now_sim + 1e-9 >= next_snap:
                await self.broadcast(self.snapshot())
                next_snap += SNAPSHOT_DT
            deadline += dt_wall
            delay = deadline - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            else:
                # fell behind; rebase so we don't sprint to catch up
                deadline = loop.time()
                await asyncio.sleep(0)


def create_app(robot=None, terrain=None, bundle=None, speed=1.0,
               initial_gait=DRIVING, static_dir=None) -> FastAPI:
    session = TeleopSession(robot=robot, terrain=terrain, bundle=bundle,
                            speed=speed, initial_gait=initial_gait)

    @contextlib.asynccontextmanager
    async def lifespan(app):
        session._task = asyncio.create_task(session.run())
        try:
            yield
        finally:
            session._task.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await session._task

    app = FastAPI(lifespan=lifespan)
    app.state.session = session

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session.clients.add(ws)
        session.locks[ws] = asyncio.Lock()
        lock = session.locks[ws]
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    cmd = _parse_command(raw)
                except ValueError as exc:
                    async with lock:
                        await ws.send_json({"type": "error",
                                            "msg": str(exc)})
                    continue
                session.set_command(cmd)
        except WebSocketDisconnect:
            pass
        finally:
            session.clients.discard(ws)
            session.locks.pop(ws, None)

    if static_dir is None:
        here = os.path.dirname(os.path.dirname(os.path.dirname(
            os.path.abspath(__file__))))
        static_dir = os.path.join(here, "frontend", "dist")
    if os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True),
                  name="frontend")
    return app
