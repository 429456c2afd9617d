"""Wheeled-quadruped locomotion stack: augmented gait library, reduced-order
simulation, power-predictive gait selection, and residual policy training."""

__version__ = "0.1.0"

from .gait_core import GaitLibrary, GaitParams, GaitState, ResidualBounds
from .robot_model import RobotConfig, load_config
from .simulator import DisturbanceSchedule, SimState, TerrainModel

__all__ = [
    "GaitLibrary", "GaitParams", "GaitState", "ResidualBounds",
    "RobotConfig", "load_config", "DisturbanceSchedule", "SimState",
    "TerrainModel", "__version__",
]
