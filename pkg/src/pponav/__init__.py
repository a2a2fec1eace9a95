"""Depth-camera goal navigation on a planar quadrotor, trained with a
from-scratch clipped-surrogate policy-gradient method.

The pieces compose bottom-up: :mod:`pponav.world` (static geometry and depth
rays), :mod:`pponav.vehicle` (discrete commands, arc integration),
:mod:`pponav.env` (episodes and reward), :mod:`pponav.nets` (MLPs with manual
gradients and Adam), :mod:`pponav.ppo` (rollouts, advantage estimation,
updates), and :mod:`pponav.harness` / :mod:`pponav.cli` on top.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, load_config, parse_config_text
from .env import (EnvConfig, EpisodeConfig, Event, GoalPoint, NavigationEnv,
                  Observation, RewardParams, SamplingRegions, StepOutcome)
from .errors import CheckpointError, ConfigError, TrainingDiverged
from .harness import EvalResult, TrainResult, replay, run_eval, run_train
from .nets import AdamState, ArchSpec, PolicyParams
from .ppo import IterationMetrics, PpoHyper, RolloutBatch, Trainer
from .vehicle import Command, VehicleState
from .world import CameraConfig, Obstacle, Rect, WorldConfig

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ArchSpec", "CameraConfig", "Checkpoint", "CheckpointError",
    "Command", "ConfigError", "EnvConfig", "EpisodeConfig", "EvalResult",
    "Event", "GoalPoint", "IterationMetrics", "NavigationEnv", "Observation",
    "Obstacle", "PolicyParams", "PpoHyper", "Rect", "RewardParams",
    "RolloutBatch", "RunConfig", "SamplingRegions", "StepOutcome",
    "TrainResult", "Trainer", "TrainingDiverged", "VehicleState",
    "WorldConfig", "load_checkpoint", "load_config", "parse_config_text",
    "replay", "run_eval", "run_train", "save_checkpoint",
]
