"""Policy and value networks with hand-written gradients and Adam.

Both heads are small tanh MLPs over the flattened observation.  Everything is
float64 and functional in style: forward passes allocate, the optimizer
returns fresh parameter structures, and gradients come from an explicit
reverse pass rather than an autodiff framework, so the whole computation is
inspectable and cheap to verify against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDiverged

DEFAULT_HIDDEN = (256, 256)

Layer = tuple[np.ndarray, np.ndarray]  # (weight (out, in), bias (out,))


@dataclass(frozen=True)
class ArchSpec:
    """Shapes of the two heads; policy and value share input but no weights."""

    input_dim: int
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    n_actions: int = 15

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.n_actions < 2 or any(h < 1 for h in self.hidden):
            raise ValueError(f"degenerate architecture: {self}")

    def layer_sizes(self, head_dim: int) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, head_dim)


@dataclass
class PolicyParams:
    """Weights of both heads.  Also reused as the container for gradients."""

    arch: ArchSpec
    policy: list[Layer]
    value: list[Layer]


@dataclass
class AdamState:
    """First/second moment accumulators, aligned with :func:`param_tensors` order."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


@dataclass(frozen=True)
class LossStats:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal (row- or column-orthonormal) matrix scaled by ``gain``."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.where(np.diagonal(r) >= 0.0, 1.0, -1.0)
    if rows < cols:
        q = q.T
    return gain * q


def init_params(arch: ArchSpec, rng: np.random.Generator) -> PolicyParams:
    """Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the policy head
    (near-uniform initial action distribution), 1.0 on the value head."""

    def make(head_dim: int, head_gain: float) -> list[Layer]:
        sizes = arch.layer_sizes(head_dim)
        layers: list[Layer] = []
        for i in range(len(sizes) - 1):
            gain = head_gain if i == len(sizes) - 2 else math.sqrt(2.0)
            w = _orthogonal(rng, sizes[i + 1], sizes[i], gain)
            layers.append((w, np.zeros(sizes[i + 1])))
        return layers

    return PolicyParams(arch=arch,
                        policy=make(arch.n_actions, 0.01),
                        value=make(1, 1.0))


def zeros_like_params(params: PolicyParams) -> PolicyParams:
    return PolicyParams(arch=params.arch,
                        policy=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params.policy],
                        value=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params.value])


def param_tensors(params: PolicyParams) -> list[np.ndarray]:
    """Flat tensor list in a fixed order (policy layers, then value layers)."""
    out: list[np.ndarray] = []
    for w, b in params.policy:
        out.extend((w, b))
    for w, b in params.value:
        out.extend((w, b))
    return out


def params_from_tensors(arch: ArchSpec, tensors: list[np.ndarray]) -> PolicyParams:
    it = iter(tensors)
    n_policy = len(arch.layer_sizes(arch.n_actions)) - 1
    n_value = len(arch.layer_sizes(1)) - 1
    policy = [(next(it), next(it)) for _ in range(n_policy)]
    value = [(next(it), next(it)) for _ in range(n_value)]
    return PolicyParams(arch=arch, policy=policy, value=value)


# ---------------------------------------------------------------------------
# Forward passes


def _mlp_forward(layers: list[Layer], x: np.ndarray) -> np.ndarray:
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        h = z if i == last else np.tanh(z)
    return h


def _as_batch(params: PolicyParams, obs: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ValueError(f"observation shape {np.shape(obs)} does not match "
                         f"input_dim {params.arch.input_dim}")
    return x, single


def forward_policy(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    """Action logits; accepts a single observation vector or a batch."""
    x, single = _as_batch(params, obs)
    logits = _mlp_forward(params.policy, x)
    return logits[0] if single else logits


def forward_value(params: PolicyParams, obs: np.ndarray) -> float | np.ndarray:
    """State value estimate(s); scalar for a single observation."""
    x, single = _as_batch(params, obs)
    v = _mlp_forward(params.value, x)[:, 0]
    return float(v[0]) if single else v


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_logprob(logits: np.ndarray, action: int) -> tuple[np.ndarray, float, float]:
    """Probabilities, log-probability of ``action``, and entropy, all from one
    numerically shifted softmax."""
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    probs = np.exp(logp)
    entropy = float(-(probs * logp).sum())
    return probs, float(logp[action]), entropy


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw: one uniform, index by cumulative sums."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(idx, len(probs) - 1)


# ---------------------------------------------------------------------------
# Loss and reverse pass


def _mlp_forward_cached(layers: list[Layer], x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward keeping each layer's input; returns (final linear output, inputs)."""
    inputs = [x]
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w.T + b
        if i == last:
            return z, inputs
        h = np.tanh(z)
        inputs.append(h)
    raise AssertionError("unreachable: empty layer list")


def _mlp_backward(layers: list[Layer], inputs: list[np.ndarray],
                  d_out: np.ndarray) -> list[Layer]:
    """Gradients of each (weight, bias) given the gradient at the final linear
    output; tanh derivative is ``1 - h**2`` with ``h`` the cached activation."""
    grads: list[Layer] = []
    g = d_out
    for i in reversed(range(len(layers))):
        w, _ = layers[i]
        grads.append((g.T @ inputs[i], g.sum(axis=0)))
        if i > 0:
            g = (g @ w) * (1.0 - inputs[i] ** 2)
    grads.reverse()
    return grads


def clipped_surrogate(ratio: np.ndarray, advantage: np.ndarray,
                      clip_eps: float) -> np.ndarray:
    """Elementwise clipped surrogate objective
    ``min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)`` (to be maximized)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage,
                      np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantage)


def ppo_loss_and_grads(params: PolicyParams, obs: np.ndarray, actions: np.ndarray,
                       logp_old: np.ndarray, advantages: np.ndarray,
                       returns: np.ndarray, clip_eps: float, value_coef: float,
                       entropy_coef: float) -> tuple[LossStats, PolicyParams]:
    """Minibatch loss and exact gradients.

    Loss = -mean(clipped surrogate) + value_coef * 0.5 * mean((V - R)^2)
           - entropy_coef * mean(entropy).

    At the min's tie point the unclipped branch carries the gradient, and a
    clipped ratio contributes zero policy gradient — the subgradient choices
    that make the objective's plateau regions genuinely flat.
    """
    n = len(actions)
    rows = np.arange(n)

    logits, p_inputs = _mlp_forward_cached(params.policy, obs)
    logp_all = log_softmax(logits)
    probs = np.exp(logp_all)
    logp_act = logp_all[rows, actions]
    ratio = np.exp(logp_act - logp_old)

    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    policy_loss = -np.minimum(unclipped, clipped).mean()
    entropy = -(probs * logp_all).sum(axis=1)

    v_out, v_inputs = _mlp_forward_cached(params.value, obs)
    v = v_out[:, 0]
    v_err = v - returns
    value_loss = 0.5 * float((v_err ** 2).mean())
    entropy_mean = float(entropy.mean())
    loss = float(policy_loss) + value_coef * value_loss - entropy_coef * entropy_mean

    # d(loss)/d(ratio): only the unclipped branch of the min propagates.
    take_unclipped = unclipped <= clipped
    d_ratio = np.where(take_unclipped, advantages, 0.0) * (-1.0 / n)
    d_logp_act = d_ratio * ratio
    # d(logp[a])/d(logits) = onehot(a) - probs.
    d_logits = -d_logp_act[:, None] * probs
    d_logits[rows, actions] += d_logp_act
    if entropy_coef != 0.0:
        # dH/d(logits) = -probs * (logp + H).
        d_logits += (entropy_coef / n) * probs * (logp_all + entropy[:, None])

    grads = PolicyParams(
        arch=params.arch,
        policy=_mlp_backward(params.policy, p_inputs, d_logits),
        value=_mlp_backward(params.value, v_inputs,
                            (value_coef / n) * v_err[:, None]))

    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > clip_eps))
    stats = LossStats(loss=loss, policy_loss=float(policy_loss),
                      value_loss=value_loss, entropy=entropy_mean,
                      clip_fraction=clip_fraction)
    if not math.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss: policy={stats.policy_loss} value={stats.value_loss} "
            f"entropy={stats.entropy} max|logit|={np.abs(logits).max()}")
    return stats, grads


# ---------------------------------------------------------------------------
# Optimizer


def init_adam(params: PolicyParams) -> AdamState:
    tensors = param_tensors(params)
    return AdamState(m=[np.zeros_like(t) for t in tensors],
                     v=[np.zeros_like(t) for t in tensors], t=0)


def adam_step(params: PolicyParams, grads: PolicyParams, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[PolicyParams, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    t = state.t + 1
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    new_tensors, new_m, new_v = [], [], []
    for theta, g, m, v in zip(param_tensors(params), param_tensors(grads),
                              state.m, state.v):
        m2 = beta1 * m + (1.0 - beta1) * g
        v2 = beta2 * v + (1.0 - beta2) * (g * g)
        step = lr * (m2 / bc1) / (np.sqrt(v2 / bc2) + eps)
        new_tensors.append(theta - step)
        new_m.append(m2)
        new_v.append(v2)
    return (params_from_tensors(params.arch, new_tensors),
            AdamState(m=new_m, v=new_v, t=t))
