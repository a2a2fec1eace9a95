"""Run configuration: a flat ``key = value`` text format and its validation.

Example::

    # comment
    world.arena.min = 0 -20
    world.arena.max = 40 20
    world.start_region = 2 -8 6 8
    world.goal_region = 34 -8 38 8
    world.obstacle[0].kind = cylinder
    world.obstacle[0].center = 15.2 -12.4
    world.obstacle[0].radius = 0.75
    ppo.learning_rate = 5e-5
    run.seed = 1

Keys are dotted paths; rectangles are ``xmin ymin xmax ymax``, points are
``x y``.  Unknown keys, duplicate keys, malformed values, and semantically
invalid worlds (obstacles poking out of the arena, sampling regions touching
an inflated obstacle, ...) all raise :class:`ConfigError` naming the source
line.  Keys other than the four required world extents are optional and fall
back to defaults.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .env import EnvConfig, RewardParams, SamplingRegions
from .errors import ConfigError
from .ppo import PpoHyper
from .world import (BOX, CYLINDER, CameraConfig, Obstacle, Rect, WorldConfig,
                    rect_obstacle_clearance)


@dataclass(frozen=True)
class RunConfig:
    """Everything a training run needs, plus the text it was parsed from."""

    world: WorldConfig
    env: EnvConfig
    ppo: PpoHyper = field(default_factory=PpoHyper)
    seed: int = 0
    max_iterations: int = 200
    eval_episodes: int = 100
    checkpoint_every: int = 5
    source_text: str = ""


_OBSTACLE_KEY = re.compile(r"^world\.obstacle\[(\d+)\]\.(kind|center|radius|half_extents|yaw)$")

_SCALAR_KEYS = {
    "world.goal_radius", "world.vehicle_radius", "world.altitude",
    "world.camera.h_fov_deg", "world.camera.v_fov_deg", "world.camera.rows",
    "world.camera.cols", "world.camera.max_range",
    "env.episode.dt", "env.episode.max_steps",
    "env.reward.progress_scale", "env.reward.goal_bonus",
    "env.reward.collision_penalty", "env.reward.step_penalty",
    "ppo.gamma", "ppo.lam", "ppo.clip_eps", "ppo.learning_rate",
    "ppo.batch_min_steps", "ppo.minibatch_size", "ppo.epochs",
    "ppo.value_coef", "ppo.entropy_coef",
    "run.seed", "run.max_iterations", "run.eval_episodes", "run.checkpoint_every",
}
_POINT_KEYS = {"world.arena.min", "world.arena.max"}
_RECT_KEYS = {
    "world.start_region", "world.goal_region",
    "env.train_region.start", "env.train_region.goal",
    "env.test_region.start", "env.test_region.goal",
}


@dataclass
class _Entry:
    raw: str
    line: int
    source: str

    def error(self, message: str) -> ConfigError:
        return ConfigError(f"{self.source}:{self.line}: {message}")

    def floats(self, n: int) -> tuple[float, ...]:
        parts = self.raw.split()
        if len(parts) != n:
            raise self.error(f"expected {n} number(s), got {len(parts)}: {self.raw!r}")
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise self.error(f"not a number in {self.raw!r}") from None

    def number(self) -> float:
        return self.floats(1)[0]

    def integer(self) -> int:
        v = self.number()
        if v != int(v):
            raise self.error(f"expected an integer, got {self.raw!r}")
        return int(v)

    def rect(self) -> Rect:
        x0, y0, x1, y1 = self.floats(4)
        try:
            return Rect(x0, y0, x1, y1)
        except ValueError as e:
            raise self.error(str(e)) from None

    def word(self) -> str:
        if len(self.raw.split()) != 1:
            raise self.error(f"expected a single word, got {self.raw!r}")
        return self.raw


def _tokenize(text: str, source: str) -> dict[str, _Entry]:
    entries: dict[str, _Entry] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: missing key before '='")
        if not value:
            raise ConfigError(f"{source}:{lineno}: missing value for {key!r}")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} "
                              f"(first set on line {entries[key].line})")
        if key not in _SCALAR_KEYS and key not in _POINT_KEYS \
                and key not in _RECT_KEYS and not _OBSTACLE_KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        entries[key] = _Entry(value, lineno, source)
    return entries


def _build_obstacles(entries: dict[str, _Entry], source: str) -> tuple[Obstacle, ...]:
    groups: dict[int, dict[str, _Entry]] = {}
    for key, entry in entries.items():
        m = _OBSTACLE_KEY.match(key)
        if m:
            groups.setdefault(int(m.group(1)), {})[m.group(2)] = entry
    if not groups:
        return ()
    indices = sorted(groups)
    if indices != list(range(len(indices))):
        raise ConfigError(f"{source}: obstacle indices must be contiguous from 0, got {indices}")

    obstacles = []
    for i in indices:
        g = groups[i]
        if "kind" not in g:
            raise ConfigError(f"{source}: world.obstacle[{i}] is missing .kind")
        kind = g["kind"].word()
        if "center" not in g:
            raise ConfigError(f"{source}: world.obstacle[{i}] is missing .center")
        center = g["center"].floats(2)
        anchor = g["kind"]
        try:
            if kind == CYLINDER:
                for bad in ("half_extents", "yaw"):
                    if bad in g:
                        raise g[bad].error(f"{bad} does not apply to a cylinder")
                if "radius" not in g:
                    raise ConfigError(f"{source}: world.obstacle[{i}] is missing .radius")
                obstacles.append(Obstacle(kind=CYLINDER, center=center,
                                          radius=g["radius"].number()))
            elif kind == BOX:
                if "radius" in g:
                    raise g["radius"].error("radius does not apply to a box")
                if "half_extents" not in g:
                    raise ConfigError(f"{source}: world.obstacle[{i}] is missing .half_extents")
                yaw = g["yaw"].number() if "yaw" in g else 0.0
                obstacles.append(Obstacle(kind=BOX, center=center,
                                          half_extents=g["half_extents"].floats(2),
                                          yaw=yaw))
            else:
                raise anchor.error(f"obstacle kind must be 'cylinder' or 'box', got {kind!r}")
        except ValueError as e:
            raise anchor.error(str(e)) from None
    return tuple(obstacles)


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse and fully validate a configuration document."""
    entries = _tokenize(text, source)

    def scalar(key: str, default: float) -> float:
        return entries[key].number() if key in entries else default

    def integer(key: str, default: int) -> int:
        return entries[key].integer() if key in entries else default

    def rect(key: str) -> Rect | None:
        return entries[key].rect() if key in entries else None

    for required in ("world.arena.min", "world.arena.max",
                     "world.start_region", "world.goal_region"):
        if required not in entries:
            raise ConfigError(f"{source}: missing required key {required!r}")

    xmin, ymin = entries["world.arena.min"].floats(2)
    xmax, ymax = entries["world.arena.max"].floats(2)
    if not (xmin < xmax and ymin < ymax):
        raise entries["world.arena.max"].error(
            f"arena.max must exceed arena.min componentwise, got "
            f"({xmin}, {ymin}) .. ({xmax}, {ymax})")

    cam_defaults = CameraConfig()
    try:
        camera = CameraConfig(
            h_fov_deg=scalar("world.camera.h_fov_deg", cam_defaults.h_fov_deg),
            v_fov_deg=scalar("world.camera.v_fov_deg", cam_defaults.v_fov_deg),
            rows=integer("world.camera.rows", cam_defaults.rows),
            cols=integer("world.camera.cols", cam_defaults.cols),
            max_range=scalar("world.camera.max_range", cam_defaults.max_range))
        world = WorldConfig(
            arena=Rect(xmin, ymin, xmax, ymax),
            obstacles=_build_obstacles(entries, source),
            start_region=rect("world.start_region"),
            goal_region=rect("world.goal_region"),
            goal_radius=scalar("world.goal_radius", 0.5),
            vehicle_radius=scalar("world.vehicle_radius", 0.3),
            altitude=scalar("world.altitude", 2.0),
            camera=camera)

        reward_defaults = RewardParams()
        train = SamplingRegions(
            start=rect("env.train_region.start") or world.start_region,
            goal=rect("env.train_region.goal") or world.goal_region)
        test = SamplingRegions(
            start=rect("env.test_region.start") or train.start,
            goal=rect("env.test_region.goal") or train.goal)
        env = EnvConfig(
            dt=scalar("env.episode.dt", 0.2),
            max_steps=integer("env.episode.max_steps", 400),
            reward=RewardParams(
                progress_scale=scalar("env.reward.progress_scale",
                                      reward_defaults.progress_scale),
                goal_bonus=scalar("env.reward.goal_bonus", reward_defaults.goal_bonus),
                collision_penalty=scalar("env.reward.collision_penalty",
                                         reward_defaults.collision_penalty),
                step_penalty=scalar("env.reward.step_penalty",
                                    reward_defaults.step_penalty)),
            train=train, test=test)

        hyper_defaults = PpoHyper()
        hyper = PpoHyper(**{f.name: (integer if f.type == "int" else scalar)(
            f"ppo.{f.name}", getattr(hyper_defaults, f.name))
            for f in fields(PpoHyper)})
    except ValueError as e:
        raise ConfigError(f"{source}: {e}") from None

    cfg = RunConfig(world=world, env=env, ppo=hyper,
                    seed=integer("run.seed", 0),
                    max_iterations=integer("run.max_iterations", 200),
                    eval_episodes=integer("run.eval_episodes", 100),
                    checkpoint_every=integer("run.checkpoint_every", 5),
                    source_text=text)
    validate_run_config(cfg, source)
    return cfg


def validate_run_config(cfg: RunConfig, source: str = "<config>") -> None:
    """Semantic checks spanning multiple keys; raises ConfigError on failure."""

    def fail(message: str) -> None:
        raise ConfigError(f"{source}: {message}")

    w = cfg.world
    if w.goal_radius <= 0.0:
        fail(f"goal_radius must be positive, got {w.goal_radius}")
    if w.vehicle_radius <= 0.0:
        fail(f"vehicle_radius must be positive, got {w.vehicle_radius}")
    if cfg.env.dt <= 0.0:
        fail(f"episode dt must be positive, got {cfg.env.dt}")
    if cfg.env.max_steps < 1:
        fail(f"max_steps must be at least 1, got {cfg.env.max_steps}")
    if cfg.seed < 0:
        fail(f"seed must be non-negative, got {cfg.seed}")
    if cfg.max_iterations < 0:
        fail(f"max_iterations must be non-negative, got {cfg.max_iterations}")
    if cfg.eval_episodes < 1:
        fail(f"eval_episodes must be at least 1, got {cfg.eval_episodes}")
    if cfg.checkpoint_every < 1:
        fail(f"checkpoint_every must be at least 1, got {cfg.checkpoint_every}")

    for i, o in enumerate(w.obstacles):
        if not w.arena.contains_rect(o.bounding_rect()):
            fail(f"world.obstacle[{i}] extends beyond the arena")

    regions = [("world.start_region", w.start_region),
               ("world.goal_region", w.goal_region)]
    for mode, sampling in (("train", cfg.env.train), ("test", cfg.env.test)):
        if sampling is not None:
            regions.append((f"env.{mode}_region.start", sampling.start))
            regions.append((f"env.{mode}_region.goal", sampling.goal))
    for name, region in regions:
        if not w.arena.contains_rect(region):
            fail(f"{name} must lie inside the arena")
        for i, o in enumerate(w.obstacles):
            if rect_obstacle_clearance(region, o) <= w.vehicle_radius:
                fail(f"{name} intersects world.obstacle[{i}] inflated by the "
                     f"vehicle radius; episodes could start in collision")
        # A region flush against a wall would let episodes start collided too.
        a = w.arena
        if (region.xmin - a.xmin <= w.vehicle_radius
                or a.xmax - region.xmax <= w.vehicle_radius
                or region.ymin - a.ymin <= w.vehicle_radius
                or a.ymax - region.ymax <= w.vehicle_radius):
            fail(f"{name} must keep more than vehicle_radius clearance from the walls")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_config_text(text, source=str(path))


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Copy of ``cfg`` with the run seed replaced (CLI --seed override).

    The embedded source text is rewritten too so checkpoints stay faithful.
    """
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    lines = []
    replaced = False
    for line in cfg.source_text.splitlines():
        if re.match(r"^\s*run\.seed\s*=", line):
            lines.append(f"run.seed = {seed}")
            replaced = True
        else:
            lines.append(line)
    if not replaced:
        lines.append(f"run.seed = {seed}")
    return replace(cfg, seed=seed, source_text="\n".join(lines) + "\n")
