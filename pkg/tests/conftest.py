import sys
from pathlib import Path

import pytest

from pponav.env import EnvConfig, SamplingRegions
from pponav.world import CameraConfig, Obstacle, Rect, WorldConfig

# Tests import shared oracles as a plain module.
sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).parent.parent


@pytest.fixture(scope="session")
def default_cfg_path() -> Path:
    return REPO_ROOT / "worlds" / "default.cfg"


@pytest.fixture(scope="session")
def smoke_cfg_path() -> Path:
    return REPO_ROOT / "worlds" / "smoke.cfg"


def make_world(xmin=-10.0, ymin=-10.0, xmax=10.0, ymax=10.0,
               obstacles=(), goal_radius=0.5, vehicle_radius=0.3,
               camera=None) -> WorldConfig:
    inset = 2.0
    return WorldConfig(
        arena=Rect(xmin, ymin, xmax, ymax),
        obstacles=tuple(obstacles),
        start_region=Rect(xmin + inset, ymin + inset, xmin + inset + 1.0, ymax - inset),
        goal_region=Rect(xmax - inset - 1.0, ymin + inset, xmax - inset, ymax - inset),
        goal_radius=goal_radius,
        vehicle_radius=vehicle_radius,
        camera=camera or CameraConfig())


@pytest.fixture
def empty_world() -> WorldConfig:
    return make_world()


@pytest.fixture
def cylinder_world() -> WorldConfig:
    return make_world(obstacles=[Obstacle(kind="cylinder", center=(5.0, 0.0), radius=1.0)])


def micro_env_config(max_steps=40) -> EnvConfig:
    return EnvConfig(max_steps=max_steps)
