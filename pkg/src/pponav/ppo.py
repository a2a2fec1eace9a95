"""On-policy training loop: rollout collection, advantage estimation, updates.

Batches use complete-episodes semantics: episodes run to termination and
collection stops at the first episode boundary at or past ``batch_min_steps``,
so batch size varies between ``batch_min_steps`` and
``batch_min_steps + max_steps - 1``.

Determinism: every random stream is derived from the run seed through
``np.random.SeedSequence`` keys — parameter init uses ``[seed, 0]``, rollout
worker ``w`` of iteration ``i`` uses ``[seed, 1, i, w]``, and minibatch
shuffling uses ``[seed, 2, i]``.  Workers partition the step budget evenly and
their episodes are concatenated in worker order, so a run is bit-reproducible
for a fixed (seed, worker count) pair, with any number of processes.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from .env import EnvConfig, Event, NavigationEnv, flatten_observation, observation_dim
from .errors import TrainingDiverged
from .nets import (AdamState, ArchSpec, PolicyParams, adam_step, forward_policy,
                   forward_value, init_adam, init_params, log_softmax,
                   ppo_loss_and_grads, sample_categorical)
from .world import WorldConfig

_STREAM_INIT = 0
_STREAM_ROLLOUT = 1
_STREAM_SHUFFLE = 2


@dataclass(frozen=True)
class PpoHyper:
    """Optimization hyperparameters (defaults follow a stock tuned recipe)."""

    gamma: float = 0.99
    lam: float = 1.0
    clip_eps: float = 0.3
    learning_rate: float = 5e-5
    batch_min_steps: int = 10_000
    minibatch_size: int = 128
    epochs: int = 30
    value_coef: float = 1.0
    entropy_coef: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.clip_eps <= 0.0:
            raise ValueError(f"clip_eps must be positive, got {self.clip_eps}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("batch_min_steps", "minibatch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.value_coef < 0.0 or self.entropy_coef < 0.0:
            raise ValueError("value_coef and entropy_coef must be non-negative")


@dataclass
class RolloutBatch:
    """Concatenated complete episodes plus per-episode bookkeeping.

    ``episode_slices[k] = (a, b)`` indexes episode ``k``'s steps;
    ``bootstrap_values[k]`` is V(s_T) for timeouts and 0 for real terminals.
    ``advantages``/``returns`` are filled in by :func:`compute_gae`.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    logp_old: np.ndarray
    values_old: np.ndarray
    episode_slices: list[tuple[int, int]]
    episode_events: list[Event]
    bootstrap_values: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.rewards)

    @property
    def n_episodes(self) -> int:
        return len(self.episode_slices)

    def episode_returns(self) -> np.ndarray:
        return np.array([self.rewards[a:b].sum() for a, b in self.episode_slices])

    def event_fraction(self, event: Event) -> float:
        return sum(e is event for e in self.episode_events) / self.n_episodes


@dataclass(frozen=True)
class IterationMetrics:
    """One row of metrics.csv."""

    iteration: int
    total_steps: int
    episodes: int
    mean_reward: float
    goal_rate: float
    collision_rate: float
    timeout_rate: float
    mean_ep_len: float
    policy_loss: float
    value_loss: float
    entropy: float
    wall_clock_s: float

    CSV_HEADER = ("iteration,total_steps,episodes,mean_reward,goal_rate,"
                  "collision_rate,timeout_rate,mean_ep_len,policy_loss,"
                  "value_loss,entropy,wall_clock_s")

    def to_csv_row(self) -> str:
        # repr of a Python float keeps full precision, so files parse back
        # losslessly (numpy scalars are coerced first; their repr differs).
        return ",".join([str(self.iteration), str(self.total_steps), str(self.episodes)]
                        + [repr(float(v)) for v in (self.mean_reward, self.goal_rate,
                                                    self.collision_rate, self.timeout_rate,
                                                    self.mean_ep_len, self.policy_loss,
                                                    self.value_loss, self.entropy,
                                                    self.wall_clock_s)])

    @classmethod
    def from_csv_row(cls, row: str) -> "IterationMetrics":
        parts = row.strip().split(",")
        return cls(int(parts[0]), int(parts[1]), int(parts[2]),
                   *(float(p) for p in parts[3:12]))


# ---------------------------------------------------------------------------
# Rollout collection


def _collect_chunk(params: PolicyParams, world: WorldConfig, env_cfg: EnvConfig,
                   mode: str, min_steps: int, seed_key: tuple[int, ...]) -> dict:
    """Run complete episodes until at least ``min_steps`` steps are gathered."""
    env_ss, act_ss = np.random.SeedSequence(list(seed_key)).spawn(2)
    env = NavigationEnv(world, env_cfg, rng=np.random.default_rng(env_ss))
    act_rng = np.random.default_rng(act_ss)
    diag = world.arena_diagonal

    obs_rows: list[np.ndarray] = []
    actions: list[int] = []
    rewards: list[float] = []
    logps: list[float] = []
    values: list[float] = []
    slices: list[tuple[int, int]] = []
    events: list[Event] = []
    bootstraps: list[float] = []

    while len(rewards) < min_steps:
        ep_start = len(rewards)
        obs = env.reset(mode)
        out = None
        while True:
            vec = flatten_observation(obs, diag)
            logits = forward_policy(params, vec)
            logp_all = log_softmax(logits)
            action = sample_categorical(np.exp(logp_all), act_rng)
            obs_rows.append(vec)
            actions.append(action)
            logps.append(float(logp_all[action]))
            values.append(forward_value(params, vec))
            out = env.step(action)
            rewards.append(out.reward)
            obs = out.observation
            if out.done:
                break
        slices.append((ep_start, len(rewards)))
        events.append(out.event)
        if out.event is Event.TIMEOUT:
            bootstraps.append(forward_value(params, flatten_observation(obs, diag)))
        else:
            bootstraps.append(0.0)

    return {"obs": np.array(obs_rows), "actions": np.array(actions, dtype=np.int64),
            "rewards": np.array(rewards), "logp_old": np.array(logps),
            "values_old": np.array(values), "slices": slices, "events": events,
            "bootstraps": np.array(bootstraps)}


def _worker_budgets(batch_min_steps: int, workers: int) -> list[int]:
    """Even split of the step budget; earlier workers absorb the remainder."""
    base, extra = divmod(batch_min_steps, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def collect_rollouts(params: PolicyParams, world: WorldConfig, env_cfg: EnvConfig,
                     hyper: PpoHyper, seed: int, iteration: int, mode: str = "train",
                     workers: int = 1, pool: ProcessPoolExecutor | None = None) -> RolloutBatch:
    """Gather one on-policy batch of complete episodes.

    With ``workers > 1`` the step budget is split evenly; each worker runs its
    own deterministic stream and chunks are concatenated in worker order, so
    results do not depend on scheduling (and ``pool=None`` falls back to
    running the same chunks sequentially in-process).
    """
    budgets = _worker_budgets(hyper.batch_min_steps, workers)
    args = [(params, world, env_cfg, mode, budget,
             (seed, _STREAM_ROLLOUT, iteration, w))
            for w, budget in enumerate(budgets)]
    if pool is not None and workers > 1:
        chunks = list(pool.map(_collect_chunk_star, args))
    else:
        chunks = [_collect_chunk(*a) for a in args]

    offsets = np.cumsum([0] + [len(c["rewards"]) for c in chunks])
    slices = [(a + off, b + off)
              for c, off in zip(chunks, offsets)
              for a, b in c["slices"]]
    return RolloutBatch(
        obs=np.concatenate([c["obs"] for c in chunks]),
        actions=np.concatenate([c["actions"] for c in chunks]),
        rewards=np.concatenate([c["rewards"] for c in chunks]),
        logp_old=np.concatenate([c["logp_old"] for c in chunks]),
        values_old=np.concatenate([c["values_old"] for c in chunks]),
        episode_slices=slices,
        episode_events=[e for c in chunks for e in c["events"]],
        bootstrap_values=np.concatenate([c["bootstraps"] for c in chunks]))


def _collect_chunk_star(args: tuple) -> dict:
    return _collect_chunk(*args)


# ---------------------------------------------------------------------------
# Advantage estimation


def compute_gae(batch: RolloutBatch, gamma: float, lam: float,
                normalize: bool = True) -> None:
    """Fill ``batch.advantages`` and ``batch.returns`` in place.

    Per episode, runs the usual backward recursion
    ``A_t = delta_t + gamma * lam * A_{t+1}`` with
    ``delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)`` and the recorded bootstrap
    value standing in for V beyond the last step.  Returns are computed from
    the raw advantages (``R_t = A_t + V(s_t)``) before normalization; then the
    advantages are shifted/scaled to zero mean and unit variance across the
    whole batch (exact population variance; an all-equal batch normalizes to
    zeros).
    """
    adv = np.zeros(batch.n_steps)
    r, v = batch.rewards, batch.values_old
    for (a, b), bootstrap in zip(batch.episode_slices, batch.bootstrap_values):
        next_value = bootstrap
        next_adv = 0.0
        for t in range(b - 1, a - 1, -1):
            delta = r[t] + gamma * next_value - v[t]
            next_adv = delta + gamma * lam * next_adv
            adv[t] = next_adv
            next_value = v[t]
    batch.returns = adv + v
    if normalize:
        centered = adv - adv.mean()
        sigma = np.sqrt((centered ** 2).mean())
        batch.advantages = centered / sigma if sigma > 0.0 else np.zeros_like(adv)
    else:
        batch.advantages = adv


# ---------------------------------------------------------------------------
# Updates


@dataclass(frozen=True)
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def ppo_update(params: PolicyParams, adam: AdamState, batch: RolloutBatch,
               hyper: PpoHyper, rng: np.random.Generator) -> tuple[PolicyParams, AdamState, UpdateStats]:
    """Run ``epochs`` passes of shuffled minibatch updates over the batch.

    Each epoch reshuffles; the final short minibatch is kept.  Returns new
    parameters, new optimizer state, and loss statistics averaged over all
    minibatches.
    """
    if batch.advantages is None or batch.returns is None:
        raise ValueError("compute_gae() must run before ppo_update()")
    n = batch.n_steps
    sums = np.zeros(4)
    count = 0
    for _ in range(hyper.epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, hyper.minibatch_size):
            mb = perm[lo:lo + hyper.minibatch_size]
            stats, grads = ppo_loss_and_grads(
                params, batch.obs[mb], batch.actions[mb], batch.logp_old[mb],
                batch.advantages[mb], batch.returns[mb],
                hyper.clip_eps, hyper.value_coef, hyper.entropy_coef)
            params, adam = adam_step(params, grads, adam, hyper.learning_rate)
            sums += (stats.policy_loss, stats.value_loss, stats.entropy,
                     stats.clip_fraction)
            count += 1
    mean = sums / count
    return params, adam, UpdateStats(*(float(v) for v in mean))


def early_stop(goal_rate_history: list[float], threshold: float = 0.8,
               window: int = 5) -> bool:
    """True once the trailing ``window`` goal rates all exceed ``threshold``
    (strictly)."""
    if len(goal_rate_history) < window:
        return False
    return all(g > threshold for g in goal_rate_history[-window:])


# ---------------------------------------------------------------------------
# Trainer


class Trainer:
    """Owns parameters, optimizer state, and the iteration counter.

    ``clock`` is injectable so tests can pin ``wall_clock_s``; everything else
    in a run is a pure function of (config, seed, workers).
    """

    def __init__(self, world: WorldConfig, env_cfg: EnvConfig, hyper: PpoHyper,
                 seed: int, arch: ArchSpec | None = None, workers: int = 1,
                 clock=time.perf_counter):
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self.world = world
        self.env_cfg = env_cfg
        self.hyper = hyper
        self.seed = seed
        self.workers = workers
        self.clock = clock
        self.arch = arch or ArchSpec(input_dim=observation_dim(world))
        init_rng = np.random.default_rng(np.random.SeedSequence([seed, _STREAM_INIT]))
        self.params = init_params(self.arch, init_rng)
        self.adam = init_adam(self.params)
        self.iteration = 0
        self.total_steps = 0
        self.goal_rate_history: list[float] = []
        self._pool: ProcessPoolExecutor | None = None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self) -> "Trainer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _ensure_pool(self) -> ProcessPoolExecutor | None:
        if self.workers > 1 and self._pool is None:
            self._pool = ProcessPoolExecutor(max_workers=self.workers,
                                             mp_context=get_context("spawn"))
        return self._pool

    def train_iteration(self) -> IterationMetrics:
        """Collect a batch, estimate advantages, update, and report metrics."""
        t0 = self.clock()
        iteration = self.iteration + 1
        batch = collect_rollouts(self.params, self.world, self.env_cfg, self.hyper,
                                 seed=self.seed, iteration=iteration,
                                 workers=self.workers, pool=self._ensure_pool())
        compute_gae(batch, self.hyper.gamma, self.hyper.lam)
        shuffle_rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, _STREAM_SHUFFLE, iteration]))
        try:
            self.params, self.adam, upd = ppo_update(self.params, self.adam,
                                                     batch, self.hyper, shuffle_rng)
        except TrainingDiverged as e:
            raise TrainingDiverged(f"iteration {iteration}: {e}") from e

        self.iteration = iteration
        self.total_steps += batch.n_steps
        goal_rate = batch.event_fraction(Event.GOAL)
        self.goal_rate_history.append(goal_rate)
        return IterationMetrics(
            iteration=iteration,
            total_steps=self.total_steps,
            episodes=batch.n_episodes,
            mean_reward=float(batch.episode_returns().mean()),
            goal_rate=goal_rate,
            collision_rate=batch.event_fraction(Event.COLLISION),
            timeout_rate=batch.event_fraction(Event.TIMEOUT),
            mean_ep_len=batch.n_steps / batch.n_episodes,
            policy_loss=upd.policy_loss,
            value_loss=upd.value_loss,
            entropy=upd.entropy,
            wall_clock_s=self.clock() - t0)

    def should_stop(self) -> bool:
        return early_stop(self.goal_rate_history)
