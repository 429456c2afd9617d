"""Command line harness: training, evaluation suites, playback, teleop.

Exit codes: 0 success, 2 malformed configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .gait_core import GAIT_NAMES, GaitLibrary
from .robot_model import ConfigError, RobotConfig, load_config
from .simulator import TerrainModel
from .trainer import TrainConfig, train


def load_config_bundle(path: str):
    """Reads one JSON file holding robot, terrain, gaits and train sections.

    Every section is optional; missing ones fall back to defaults.  Unknown
    keys anywhere are rejected so typos fail loudly instead of silently
    training the wrong thing.
    """
    if path is None:
        return RobotConfig.default(), TerrainModel(), GaitLibrary.default(), {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"robot", "terrain", "gaits", "train"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    robot = load_config(data["robot"]) if "robot" in data \
        else RobotConfig.default()
    try:
        terrain = TerrainModel(**data.get("terrain", {}))
    except TypeError as exc:
        raise ConfigError(f"bad terrain section: {exc}")
    gaits = GaitLibrary.from_dict(data["gaits"]) if "gaits" in data \
        else GaitLibrary.default()
    return robot, terrain, gaits, data.get("train", {})


def _policy_and_bundle(args):
    from .runtime import LearnedPolicy, PolicyBundle, ZeroResidualPolicy
    if getattr(args, "weights", None):
        bundle = PolicyBundle.load(args.weights)
        return bundle.policy, bundle
    return ZeroResidualPolicy(), None


def _emit(report, out_path):
    text = report.to_json()
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_train(args) -> int:
    robot, terrain, gaits, train_section = load_config_bundle(args.config)
    overrides = dict(train_section)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.envs is not None:
        overrides["n_envs"] = args.envs
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    cfg = TrainConfig.from_dict(overrides)
    result = train(cfg, robot=robot, terrain=terrain, run_dir=args.out,
                   verbose=not args.quiet)
    rewards = [row["reward_mean"] for row in result["curves"]]
    print(f"done: {len(rewards)} epochs, "
          f"first {rewards[0]:+.4f} -> last {rewards[-1]:+.4f}, "
          f"artifacts in {args.out}")
    return 0


def cmd_eval_tracking(args) -> int:
    from .runtime import eval_tracking
    robot, terrain, _, _ = load_config_bundle(args.config)
    policy, bundle = _policy_and_bundle(args)
    report = eval_tracking(policy, robot=robot, duration=args.duration,
                           seed=args.seed or 0, bundle=bundle,
                           terrain=terrain)
    _emit(report, args.out)
    return 0


def cmd_eval_energy(args) -> int:
    from .runtime import eval_energy
    robot, terrain, _, _ = load_config_bundle(args.config)
    policy, bundle = _policy_and_bundle(args)
    gait = GAIT_NAMES.index(args.gait) if args.gait else 0
    report = eval_energy(policy, robot=robot, duration=args.duration,
                         command=args.command, seed=args.seed or 0,
                         bundle=bundle, use_selector=not args.fixed_gait,
                         initial_gait=gait, terrain=terrain)
    _emit(report, args.out)
    return 0


def cmd_eval_robustness(args) -> int:
    from .runtime import eval_robustness
    robot, terrain, _, _ = load_config_bundle(args.config)
    policy, bundle = _policy_and_bundle(args)
    report = eval_robustness(policy, robot=robot,
                             push_magnitudes=args.pushes,
                             trials=args.trials, command=args.command,
                             seed=args.seed or 0, bundle=bundle,
                             terrain=terrain)
    _emit(report, args.out)
    return 0


def cmd_play(args) -> int:
    from .runtime import play
    robot, terrain, _, _ = load_config_bundle(args.config)
    policy, bundle = _policy_and_bundle(args)
    gait = GAIT_NAMES.index(args.gait) if args.gait else 0
    summary = play(policy, robot=robot, duration=args.duration,
                   command=args.command, seed=args.seed or 0, bundle=bundle,
                   csv_path=args.csv, initial_gait=gait, terrain=terrain)
    print(json.dumps(summary))
    return 0


def cmd_serve_teleop(args) -> int:
    import uvicorn

    from .teleop import create_app
    robot, terrain, _, _ = load_config_bundle(args.config)
    _, bundle = _policy_and_bundle(args)
    app = create_app(robot=robot, terrain=terrain, bundle=bundle,
                     speed=args.speed)
    host, _, port = args.bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def _add_common(sub, weights=True):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, default=None)
    if weights:
        sub.add_argument("--weights", help="run directory with trained nets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wheelquad",
        description="Energy-aware wheeled quadruped: training, evaluation "
                    "and teleoperation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the on-policy training loop")
    _add_common(p, weights=False)
    p.add_argument("--out", default="run", help="artifact directory")
    p.add_argument("--envs", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-tracking", help="velocity tracking error suite")
    _add_common(p)
    p.add_argument("--duration", type=float, default=8.0)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval_tracking)

    p = sub.add_parser("eval-energy", help="power use and gait occupancy")
    _add_common(p)
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--command", type=float, nargs=3, default=[0.5, 0.0, 0.0],
                   metavar=("VX", "VY", "WZ"))
    p.add_argument("--gait", choices=GAIT_NAMES, default=None,
                   help="initial gait")
    p.add_argument("--fixed-gait", action="store_true",
                   help="disable the gait selector")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval_energy)

    p = sub.add_parser("eval-robustness", help="push recovery rates")
    _add_common(p)
    p.add_argument("--pushes", type=float, nargs="+", default=[0.3, 0.5, 0.7],
                   help="lateral velocity push magnitudes, m/s")
    p.add_argument("--trials", type=int, default=8)
    p.add_argument("--command", type=float, nargs=3, default=[0.5, 0.0, 0.0],
                   metavar=("VX", "VY", "WZ"))
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval_robustness)

    p = sub.add_parser("play", help="roll one episode, optionally log CSV")
    _add_common(p)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--command", type=float, nargs=3, default=[0.5, 0.0, 0.0],
                   metavar=("VX", "VY", "WZ"))
    p.add_argument("--gait", choices=GAIT_NAMES, default=None)
    p.add_argument("--csv", help="per-step log path")
    p.set_defaults(func=cmd_play)

    p = sub.add_parser("serve-teleop", help="WebSocket teleoperation server")
    _add_common(p)
    p.add_argument("--bind", default="127.0.0.1:8080", metavar="HOST:PORT")
    p.add_argument("--speed", type=float, default=1.0,
                   help="simulation rate multiplier")
    p.set_defaults(func=cmd_serve_teleop)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
