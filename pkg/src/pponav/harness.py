"""Run orchestration: training loop with artifacts, evaluation, and replay.

``run_train`` writes into its output directory:

* ``metrics.csv``  — one row per iteration (see IterationMetrics.CSV_HEADER)
* ``checkpoint_NNNN.ckpt`` every ``checkpoint_every`` iterations and
  ``checkpoint_final.ckpt`` at the end
* ``summary.json`` — stop reason and headline numbers

Runs are bit-reproducible for a fixed (config, seed, workers): metrics rows
except wall_clock_s are byte-identical and checkpoints are bit-identical.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, TextIO

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig, parse_config_text
from .env import (Event, GoalPoint, NavigationEnv, Observation, flatten_observation,
                  observation_dim)
from .errors import CheckpointError, ConfigError
from .nets import PolicyParams, forward_policy, log_softmax, sample_categorical
from .ppo import IterationMetrics, Trainer
from .vehicle import VehicleState

_STREAM_EVAL = 3


@dataclass(frozen=True)
class TrainResult:
    iterations: int
    stop_reason: str  # "early_stop" | "max_iterations"
    metrics: list[IterationMetrics]
    out_dir: Path

    @property
    def final_goal_rate(self) -> float:
        return self.metrics[-1].goal_rate if self.metrics else 0.0


def run_train(cfg: RunConfig, out_dir: str | Path, workers: int = 1,
              clock: Callable[[], float] = time.perf_counter,
              progress: TextIO | None = None) -> TrainResult:
    """Train until the early-stop rule fires or ``max_iterations`` is reached."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    metrics: list[IterationMetrics] = []
    stop_reason = "max_iterations"
    with Trainer(cfg.world, cfg.env, cfg.ppo, seed=cfg.seed, workers=workers,
                 clock=clock) as trainer, \
            open(out / "metrics.csv", "w", newline="\n") as csv:
        csv.write(IterationMetrics.CSV_HEADER + "\n")
        csv.flush()

        def checkpoint(name: str) -> None:
            save_checkpoint(out / name, trainer.params, trainer.adam,
                            seed=cfg.seed, iteration=trainer.iteration,
                            config_text=cfg.source_text)

        for _ in range(cfg.max_iterations):
            row = trainer.train_iteration()
            metrics.append(row)
            csv.write(row.to_csv_row() + "\n")
            csv.flush()
            if progress is not None:
                print(f"iter {row.iteration:4d}  steps {row.total_steps:8d}  "
                      f"mean_reward {row.mean_reward:9.1f}  goal {row.goal_rate:.2f}  "
                      f"collision {row.collision_rate:.2f}  timeout {row.timeout_rate:.2f}",
                      file=progress, flush=True)
            if trainer.iteration % cfg.checkpoint_every == 0:
                checkpoint(f"checkpoint_{trainer.iteration:04d}.ckpt")
            if trainer.should_stop():
                stop_reason = "early_stop"
                break
        checkpoint("checkpoint_final.ckpt")

    summary = {
        "stop_reason": stop_reason,
        "iterations": len(metrics),
        "total_steps": metrics[-1].total_steps if metrics else 0,
        "final_goal_rate": metrics[-1].goal_rate if metrics else 0.0,
        "wall_clock_s": float(sum(m.wall_clock_s for m in metrics)),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return TrainResult(iterations=len(metrics), stop_reason=stop_reason,
                       metrics=metrics, out_dir=out)


# ---------------------------------------------------------------------------
# Evaluation and replay


@dataclass(frozen=True)
class EpisodeOutcome:
    index: int
    start: VehicleState
    goal: GoalPoint
    event: Event
    steps: int
    episode_return: float


@dataclass(frozen=True)
class EvalResult:
    outcomes: list[EpisodeOutcome]

    @property
    def episodes(self) -> int:
        return len(self.outcomes)

    def rate(self, event: Event) -> float:
        return sum(o.event is event for o in self.outcomes) / self.episodes

    @property
    def goal_rate(self) -> float:
        return self.rate(Event.GOAL)

    @property
    def mean_return(self) -> float:
        return float(np.mean([o.episode_return for o in self.outcomes]))

    @property
    def mean_steps(self) -> float:
        return float(np.mean([o.steps for o in self.outcomes]))


@dataclass(frozen=True)
class TrajectoryRecord:
    """One step of a replayed episode: pose the action was taken from."""

    step: int
    x: float
    y: float
    yaw: float
    action: int
    reward: float
    event: Event


def _load_for_inference(checkpoint_path: str | Path,
                        config_override: RunConfig | None) -> tuple[RunConfig, Checkpoint]:
    ckpt = load_checkpoint(checkpoint_path)
    if config_override is not None:
        cfg = config_override
    else:
        if not ckpt.config_text.strip():
            raise CheckpointError(
                f"{checkpoint_path}: no embedded config; pass a config explicitly")
        cfg = parse_config_text(ckpt.config_text, source=f"{checkpoint_path}[config]")
    if ckpt.params.arch.input_dim != observation_dim(cfg.world):
        raise CheckpointError(
            f"checkpoint expects {ckpt.params.arch.input_dim} observation values but "
            f"the configured camera produces {observation_dim(cfg.world)}")
    return cfg, ckpt


def _greedy(params: PolicyParams, diag: float) -> Callable[[Observation], int]:
    def select(obs: Observation) -> int:
        logits = forward_policy(params, flatten_observation(obs, diag))
        return int(np.argmax(logits))
    return select


def _stochastic(params: PolicyParams, diag: float,
                rng: np.random.Generator) -> Callable[[Observation], int]:
    def select(obs: Observation) -> int:
        logits = forward_policy(params, flatten_observation(obs, diag))
        return sample_categorical(np.exp(log_softmax(logits)), rng)
    return select


def _run_episode(env: NavigationEnv, mode: str,
                 select: Callable[[Observation], int]) -> tuple[list[TrajectoryRecord], Event]:
    obs = env.reset(mode)
    records: list[TrajectoryRecord] = []
    while True:
        pose = env.state
        action = select(obs)
        out = env.step(action)
        records.append(TrajectoryRecord(step=len(records), x=pose.x, y=pose.y,
                                        yaw=pose.yaw, action=action,
                                        reward=out.reward, event=out.event))
        obs = out.observation
        if out.done:
            return records, out.event


def _eval_env(cfg: RunConfig, seed: int) -> tuple[NavigationEnv, np.random.Generator]:
    """Environment RNG and action RNG shared by eval and replay, so that the
    first replayed episode is exactly the first evaluated episode."""
    env_ss, act_ss = np.random.SeedSequence([seed, _STREAM_EVAL]).spawn(2)
    env = NavigationEnv(cfg.world, cfg.env, rng=np.random.default_rng(env_ss))
    return env, np.random.default_rng(act_ss)


def run_eval(checkpoint_path: str | Path, episodes: int = 100, seed: int = 0,
             mode: str = "test", stochastic: bool = False,
             config: RunConfig | None = None) -> EvalResult:
    """Roll out a trained policy on freshly sampled episodes.

    Greedy (argmax) action selection by default; ``stochastic=True`` samples
    from the policy distribution instead.
    """
    if episodes < 1:
        raise ConfigError(f"episodes must be at least 1, got {episodes}")
    cfg, ckpt = _load_for_inference(checkpoint_path, config)
    env, act_rng = _eval_env(cfg, seed)
    diag = cfg.world.arena_diagonal
    select = (_stochastic(ckpt.params, diag, act_rng) if stochastic
              else _greedy(ckpt.params, diag))

    outcomes = []
    for i in range(episodes):
        records, event = _run_episode(env, mode, select)
        outcomes.append(EpisodeOutcome(
            index=i, start=env.episode.start, goal=env.episode.goal, event=event,
            steps=len(records),
            episode_return=float(math.fsum(r.reward for r in records))))
    return EvalResult(outcomes=outcomes)


def replay(checkpoint_path: str | Path, seed: int = 0, out_path: str | Path | None = None,
           mode: str = "test", stochastic: bool = False,
           config: RunConfig | None = None) -> list[TrajectoryRecord]:
    """Re-run one greedy episode and optionally dump it as JSON lines.

    With the same seed/mode, the episode matches the first episode of
    :func:`run_eval`, including its rewards.
    """
    cfg, ckpt = _load_for_inference(checkpoint_path, config)
    env, act_rng = _eval_env(cfg, seed)
    diag = cfg.world.arena_diagonal
    select = (_stochastic(ckpt.params, diag, act_rng) if stochastic
              else _greedy(ckpt.params, diag))
    records, event = _run_episode(env, mode, select)

    if out_path is not None:
        ep = env.episode
        lines = [json.dumps({
            "type": "episode",
            "start": {"x": ep.start.x, "y": ep.start.y, "yaw": ep.start.yaw},
            "goal": {"x": ep.goal.x, "y": ep.goal.y},
            "outcome": event.value,
            "steps": len(records),
        })]
        for r in records:
            lines.append(json.dumps({
                "type": "step", "step": r.step, "x": r.x, "y": r.y, "yaw": r.yaw,
                "action": r.action, "reward": r.reward, "event": r.event.value,
            }))
        Path(out_path).write_text("\n".join(lines) + "\n")
    return records


def eval_outcomes_csv(result: EvalResult, path: str | Path) -> None:
    """Optional per-episode dump alongside the aggregate numbers."""
    lines = ["episode,start_x,start_y,start_yaw,goal_x,goal_y,event,steps,episode_return"]
    for o in result.outcomes:
        lines.append(",".join([str(o.index), repr(o.start.x), repr(o.start.y),
                               repr(o.start.yaw), repr(o.goal.x), repr(o.goal.y),
                               o.event.value, str(o.steps), repr(o.episode_return)]))
    Path(path).write_text("\n".join(lines) + "\n")
