"""Episodic goal-reaching task: observations, shaped reward, termination.

The observation is a normalized depth image plus goal-relative heading error
and distance.  Reward shaping pays for progress toward the goal each step:

    r = progress_scale * (d_prev - d_curr)
        + goal_bonus   * [goal reached]
        - collision_penalty * [collision]
        - step_penalty

i.e. positive when the step reduced the goal distance.  Reaching the goal is
checked before collision, so a step that enters the goal disc terminates as a
success and pays no collision penalty.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .vehicle import Command, VehicleState, decode_action, integrate, wrap_angle
from .world import Rect, WorldConfig, collision, render_depth


class Event(enum.Enum):
    """Why (or whether) the step ended the episode."""

    NONE = "none"
    GOAL = "goal_reached"
    COLLISION = "collision"
    TIMEOUT = "timeout"


# Events that end an episode without reaching the goal but with a bootstrap
# worth zero (the state is genuinely terminal, not merely truncated).
TERMINAL_EVENTS = (Event.GOAL, Event.COLLISION)


@dataclass(frozen=True)
class GoalPoint:
    x: float
    y: float


@dataclass(frozen=True)
class Observation:
    """What the policy sees: depth in [0, 1], heading error in (-pi, pi], distance in metres."""

    depth: np.ndarray
    heading_error: float
    distance: float


@dataclass(frozen=True)
class RewardParams:
    progress_scale: float = 20.0
    goal_bonus: float = 2000.0
    collision_penalty: float = 1000.0
    step_penalty: float = 1.0


@dataclass(frozen=True)
class SamplingRegions:
    """Rectangles that episode starts and goals are drawn from."""

    start: Rect
    goal: Rect


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.2
    max_steps: int = 400
    reward: RewardParams = field(default_factory=RewardParams)
    train: SamplingRegions | None = None
    test: SamplingRegions | None = None


@dataclass(frozen=True)
class EpisodeConfig:
    """Fully pinned episode: no sampling happens when resetting from one."""

    start: VehicleState
    goal: GoalPoint
    max_steps: int


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation
    reward: float
    done: bool
    event: Event


def goal_distance(state: VehicleState, goal: GoalPoint) -> float:
    return math.hypot(goal.x - state.x, goal.y - state.y)


def heading_error(state: VehicleState, goal: GoalPoint) -> float:
    """Bearing to the goal minus vehicle yaw, wrapped to (-pi, pi].

    Zero when the goal sits dead ahead; defined as zero at the goal itself.
    """
    dx = goal.x - state.x
    dy = goal.y - state.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return wrap_angle(math.atan2(dy, dx) - state.yaw)


def observe(state: VehicleState, goal: GoalPoint, world: WorldConfig) -> Observation:
    depth = render_depth((state.x, state.y), state.yaw, world) / world.camera.max_range
    return Observation(depth=depth,
                       heading_error=heading_error(state, goal),
                       distance=goal_distance(state, goal))


def flatten_observation(obs: Observation, arena_diagonal: float) -> np.ndarray:
    """Network input vector: row-major depth cells, then scaled scalars.

    Heading error is divided by pi, distance by the arena diagonal, keeping
    every component in [-1, 1].
    """
    return np.concatenate([obs.depth.ravel(),
                           (obs.heading_error / math.pi, obs.distance / arena_diagonal)])


def observation_dim(world: WorldConfig) -> int:
    return world.camera.rows * world.camera.cols + 2


def reward(d_prev: float, d_curr: float, goal_reached: bool, collided: bool,
           params: RewardParams = RewardParams()) -> float:
    """Per-step shaped reward; see the module docstring for the formula."""
    return (params.progress_scale * (d_prev - d_curr)
            + params.goal_bonus * (1.0 if goal_reached else 0.0)
            - params.collision_penalty * (1.0 if collided else 0.0)
            - params.step_penalty)


def sample_start_goal(regions: SamplingRegions, rng: np.random.Generator,
                      goal_radius: float, max_tries: int = 1000) -> tuple[VehicleState, GoalPoint]:
    """Draw a start pose and goal point with ``|start - goal| > goal_radius``.

    Start yaw is uniform over the circle.  Raises if the regions are so close
    that no admissible pair shows up within ``max_tries`` draws.
    """
    for _ in range(max_tries):
        sx, sy = regions.start.sample(rng)
        gx, gy = regions.goal.sample(rng)
        if math.hypot(gx - sx, gy - sy) > goal_radius:
            yaw = wrap_angle(float(rng.uniform(-math.pi, math.pi)))
            return VehicleState(sx, sy, yaw), GoalPoint(gx, gy)
    raise ConfigError(
        f"could not sample start/goal farther apart than goal_radius={goal_radius} "
        f"after {max_tries} tries; start and goal regions nearly coincide")


class NavigationEnv:
    """Mutable episode runner over an immutable :class:`WorldConfig`.

    Each instance owns its RNG and the state of at most one in-flight
    episode; parallel rollouts should each build their own instance.
    """

    def __init__(self, world: WorldConfig, cfg: EnvConfig, rng: np.random.Generator):
        self.world = world
        self.cfg = cfg
        self._rng = rng
        self._episode: EpisodeConfig | None = None
        self._state: VehicleState | None = None
        self._goal: GoalPoint | None = None
        self._steps = 0
        self._done = True
        self._event = Event.NONE

    # -- read-only views ---------------------------------------------------

    @property
    def state(self) -> VehicleState:
        return self._state

    @property
    def goal(self) -> GoalPoint:
        return self._goal

    @property
    def episode(self) -> EpisodeConfig | None:
        return self._episode

    @property
    def step_count(self) -> int:
        return self._steps

    @property
    def done(self) -> bool:
        return self._done

    @property
    def event(self) -> Event:
        return self._event

    def regions(self, mode: str) -> SamplingRegions:
        if mode == "train":
            regions = self.cfg.train
        elif mode == "test":
            regions = self.cfg.test
        else:
            raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
        if regions is None:
            regions = SamplingRegions(self.world.start_region, self.world.goal_region)
        return regions

    # -- episode control ----------------------------------------------------

    def reset(self, mode: str = "train") -> Observation:
        """Sample a fresh start/goal pair from the mode's regions and begin."""
        start, goal = sample_start_goal(self.regions(mode), self._rng,
                                        self.world.goal_radius)
        return self.reset_from(EpisodeConfig(start, goal, self.cfg.max_steps))

    def reset_from(self, episode: EpisodeConfig) -> Observation:
        self._episode = episode
        self._state = episode.start
        self._goal = episode.goal
        self._steps = 0
        self._done = False
        self._event = Event.NONE
        return observe(self._state, self._goal, self.world)

    def step(self, action: int) -> StepOutcome:
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset() first")
        command = decode_action(action)
        d_prev = goal_distance(self._state, self._goal)
        new_state = integrate(self._state, command, self.cfg.dt)
        d_curr = goal_distance(new_state, self._goal)

        goal_reached = d_curr < self.world.goal_radius
        collided = (not goal_reached) and collision((new_state.x, new_state.y), self.world)
        self._steps += 1
        if goal_reached:
            event = Event.GOAL
        elif collided:
            event = Event.COLLISION
        elif self._steps >= self._episode.max_steps:
            event = Event.TIMEOUT
        else:
            event = Event.NONE

        r = reward(d_prev, d_curr, goal_reached, collided, self.cfg.reward)
        self._state = new_state
        self._event = event
        self._done = event is not Event.NONE
        return StepOutcome(observation=observe(new_state, self._goal, self.world),
                           reward=r, done=self._done, event=event)
