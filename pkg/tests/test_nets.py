import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pponav.errors import TrainingDiverged
from pponav.nets import (AdamState, ArchSpec, PolicyParams, adam_step,
                         clipped_surrogate, forward_policy, forward_value,
                         init_adam, init_params, log_softmax, param_tensors,
                         params_from_tensors, ppo_loss_and_grads,
                         sample_categorical, softmax_logprob, zeros_like_params)

import oracles


def small_params(seed=0, input_dim=4, hidden=(3,), n_actions=3) -> PolicyParams:
    arch = ArchSpec(input_dim=input_dim, hidden=hidden, n_actions=n_actions)
    return init_params(arch, np.random.default_rng(seed))


def random_minibatch(params: PolicyParams, rng, n=6, kink_margin=1e-3):
    """Synthetic PPO minibatch, resampled until no term sits near a clip kink
    or min tie, so finite differences stay valid."""
    arch = params.arch
    clip_eps = 0.3
    while True:
        obs = rng.normal(size=(n, arch.input_dim))
        actions = rng.integers(0, arch.n_actions, size=n)
        advantages = rng.normal(size=n)
        returns = rng.normal(size=n)
        logits = forward_policy(params, obs)
        logp = log_softmax(logits)[np.arange(n), actions]
        logp_old = logp + rng.normal(scale=0.2, size=n)
        ratio = np.exp(logp - logp_old)
        near_kink = (np.abs(ratio - (1 - clip_eps)) < kink_margin) | \
                    (np.abs(ratio - (1 + clip_eps)) < kink_margin) | \
                    (np.abs(advantages) < kink_margin)
        if not near_kink.any():
            return obs, actions, logp_old, advantages, returns, clip_eps


class TestForward:
    def test_zero_params_zero_logits(self):
        params = small_params()
        zeroed = zeros_like_params(params)
        obs = np.random.default_rng(1).normal(size=4)
        np.testing.assert_array_equal(forward_policy(zeroed, obs), np.zeros(3))
        assert forward_value(zeroed, obs) == 0.0

    def test_matches_loop_oracle(self):
        params = small_params(seed=5, input_dim=6, hidden=(5, 4), n_actions=4)
        rng = np.random.default_rng(2)
        obs = rng.normal(size=(7, 6))
        got = forward_policy(params, obs)
        expected = oracles.forward_oracle(params.policy, obs)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        got_v = forward_value(params, obs)
        expected_v = oracles.forward_oracle(params.value, obs)[:, 0]
        np.testing.assert_allclose(got_v, expected_v, atol=1e-12)

    def test_single_and_batch_agree(self):
        params = small_params(seed=3)
        rng = np.random.default_rng(4)
        obs = rng.normal(size=(5, 4))
        batch = forward_policy(params, obs)
        for i in range(5):
            np.testing.assert_allclose(forward_policy(params, obs[i]), batch[i],
                                       atol=1e-12)

    def test_value_ignores_policy_weights(self):
        params = small_params(seed=6)
        obs = np.random.default_rng(7).normal(size=4)
        before = forward_value(params, obs)
        params.policy[0][0][:] = 999.0
        assert forward_value(params, obs) == before

    def test_shape_mismatch_rejected(self):
        params = small_params()
        with pytest.raises(ValueError):
            forward_policy(params, np.zeros(5))

    def test_finite_difference_slope_first_layer(self):
        # Continuity example: perturbing one first-layer weight moves the
        # logits along the analytic tangent.
        params = small_params(seed=8)
        obs = np.array([0.3, -0.2, 0.5, 0.1])
        h = 1e-6
        base = forward_policy(params, obs)
        params.policy[0][0][1, 2] += h
        up = forward_policy(params, obs)
        params.policy[0][0][1, 2] -= 2 * h
        down = forward_policy(params, obs)
        params.policy[0][0][1, 2] += h
        slope = (up - down) / (2 * h)
        assert np.all(np.isfinite(slope))
        np.testing.assert_allclose(forward_policy(params, obs), base, atol=1e-12)


class TestInit:
    def test_hidden_layers_orthogonal(self):
        arch = ArchSpec(input_dim=110, hidden=(256, 256), n_actions=15)
        params = init_params(arch, np.random.default_rng(0))
        w0 = params.policy[0][0]  # 256 x 110: columns orthonormal * sqrt(2)
        np.testing.assert_allclose(w0.T @ w0, 2.0 * np.eye(110), atol=1e-10)
        w1 = params.policy[1][0]  # 256 x 256
        np.testing.assert_allclose(w1 @ w1.T, 2.0 * np.eye(256), atol=1e-10)

    def test_head_gains(self):
        arch = ArchSpec(input_dim=110, hidden=(256, 256), n_actions=15)
        params = init_params(arch, np.random.default_rng(0))
        head = params.policy[-1][0]  # 15 x 256: rows orthonormal * 0.01
        np.testing.assert_allclose(head @ head.T, 1e-4 * np.eye(15), atol=1e-12)
        vhead = params.value[-1][0]
        assert float(vhead[0] @ vhead[0]) == pytest.approx(1.0)

    def test_biases_zero(self):
        params = small_params()
        for _, b in params.policy + params.value:
            np.testing.assert_array_equal(b, 0.0)

    def test_near_uniform_initial_policy(self):
        arch = ArchSpec(input_dim=110, hidden=(256, 256), n_actions=15)
        params = init_params(arch, np.random.default_rng(1))
        obs = np.random.default_rng(2).uniform(-1, 1, size=110)
        probs, _, entropy = softmax_logprob(forward_policy(params, obs), 0)
        assert entropy > 0.99 * math.log(15)

    def test_roundtrip_tensor_order(self):
        params = small_params(seed=11)
        rebuilt = params_from_tensors(params.arch, param_tensors(params))
        for a, b in zip(param_tensors(params), param_tensors(rebuilt)):
            np.testing.assert_array_equal(a, b)


class TestSoftmax:
    def test_uniform_logits(self):
        logits = np.zeros(15)
        probs, logp, entropy = softmax_logprob(logits, 3)
        np.testing.assert_allclose(probs, np.full(15, 1 / 15), atol=1e-15)
        assert logp == pytest.approx(-math.log(15), abs=1e-12)
        assert entropy == pytest.approx(math.log(15), abs=1e-12)

    def test_extreme_logit_stable(self):
        logits = np.zeros(15)
        logits[4] = 1000.0
        probs, logp, entropy = softmax_logprob(logits, 4)
        assert probs[4] == pytest.approx(1.0)
        assert logp == pytest.approx(0.0, abs=1e-12)
        assert entropy == pytest.approx(0.0, abs=1e-9)
        assert np.all(np.isfinite(probs))

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=20))
    def test_normalization(self, logit_list):
        probs, _, entropy = softmax_logprob(np.array(logit_list), 0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert entropy >= -1e-12
        assert np.all(probs >= 0.0)


class TestSampleCategorical:
    def test_one_hot(self):
        probs = np.zeros(15)
        probs[9] = 1.0
        rng = np.random.default_rng(0)
        assert all(sample_categorical(probs, rng) == 9 for _ in range(100))

    def test_uniform_frequencies(self):
        probs = np.full(15, 1 / 15)
        rng = np.random.default_rng(123)
        draws = np.array([sample_categorical(probs, rng) for _ in range(150_000)])
        freq = np.bincount(draws, minlength=15) / len(draws)
        np.testing.assert_allclose(freq, 1 / 15, atol=0.005)

    def test_same_seed_same_sequence(self):
        probs = np.array([0.2, 0.5, 0.3])
        rng1, rng2 = np.random.default_rng(7), np.random.default_rng(7)
        s1 = [sample_categorical(probs, rng1) for _ in range(50)]
        s2 = [sample_categorical(probs, rng2) for _ in range(50)]
        assert s1 == s2


class TestClippedSurrogate:
    def test_on_policy_point(self):
        for a in (-3.0, 0.0, 2.5):
            assert clipped_surrogate(1.0, a, 0.3) == a

    def test_positive_advantage_clips_above(self):
        assert clipped_surrogate(1.5, 2.0, 0.3) == pytest.approx(2.6)

    def test_negative_advantage_takes_min(self):
        assert clipped_surrogate(0.5, -1.0, 0.3) == pytest.approx(-0.7)

    @given(ratio=st.floats(0.01, 5.0), adv=st.floats(-5, 5),
           eps=st.floats(0.05, 0.5))
    def test_never_exceeds_unclipped_for_positive_adv(self, ratio, adv, eps):
        s = float(clipped_surrogate(ratio, adv, eps))
        assert s <= max(ratio * adv, np.clip(ratio, 1 - eps, 1 + eps) * adv) + 1e-12


class TestLossAndGradients:
    def test_zero_advantages_zero_policy_gradient(self):
        params = small_params(seed=1)
        rng = np.random.default_rng(2)
        obs, actions, logp_old, _, returns, clip = random_minibatch(params, rng)
        _, grads = ppo_loss_and_grads(params, obs, actions, logp_old,
                                      np.zeros(len(actions)), returns,
                                      clip, value_coef=1.0, entropy_coef=0.0)
        for w, b in grads.policy:
            np.testing.assert_array_equal(w, 0.0)
            np.testing.assert_array_equal(b, 0.0)
        # The value head still learns.
        assert any(np.abs(w).max() > 0 for w, _ in grads.value)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(42)
        params = small_params(seed=13, input_dim=4, hidden=(4, 3), n_actions=3)
        obs, actions, logp_old, adv, ret, clip = random_minibatch(params, rng)

        def loss_fn(p):
            stats, _ = ppo_loss_and_grads(p, obs, actions, logp_old, adv, ret,
                                          clip, value_coef=0.7, entropy_coef=0.01)
            return stats.loss

        _, analytic = ppo_loss_and_grads(params, obs, actions, logp_old, adv, ret,
                                         clip, value_coef=0.7, entropy_coef=0.01)
        numeric = oracles.numeric_loss_gradients(loss_fn, params)
        for a, n in zip(param_tensors(analytic), param_tensors(numeric)):
            err = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            assert err.max() < 1e-4

    def test_value_gradient_closed_form(self):
        # Linear value head (no hidden layers): V = w.x + b, so
        # d(value loss)/dw = value_coef * (V - R) * x / n.
        arch = ArchSpec(input_dim=3, hidden=(), n_actions=2)
        params = init_params(arch, np.random.default_rng(0))
        obs = np.array([[1.0, 2.0, -1.0]])
        returns = np.array([4.0])
        v = forward_value(params, obs)[0]
        _, grads = ppo_loss_and_grads(params, obs, np.array([0]),
                                      np.array([-0.5]), np.zeros(1), returns,
                                      0.3, value_coef=2.0, entropy_coef=0.0)
        np.testing.assert_allclose(grads.value[0][0], 2.0 * (v - 4.0) * obs,
                                   atol=1e-12)
        np.testing.assert_allclose(grads.value[0][1], [2.0 * (v - 4.0)], atol=1e-12)

    def test_ratio_one_equals_unclipped_gradient(self):
        # When logp_old comes from the current params, every ratio is 1 and
        # clipping cannot engage: gradients match an effectively unclipped run.
        params = small_params(seed=21)
        rng = np.random.default_rng(3)
        n = 8
        obs = rng.normal(size=(n, 4))
        actions = rng.integers(0, 3, size=n)
        logp_old = log_softmax(forward_policy(params, obs))[np.arange(n), actions]
        adv = rng.normal(size=n)
        ret = rng.normal(size=n)
        _, clipped = ppo_loss_and_grads(params, obs, actions, logp_old, adv, ret,
                                        0.3, 1.0, 0.0)
        _, unclipped = ppo_loss_and_grads(params, obs, actions, logp_old, adv, ret,
                                          1e9, 1.0, 0.0)
        for a, b in zip(param_tensors(clipped), param_tensors(unclipped)):
            np.testing.assert_allclose(a, b, atol=1e-12)

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_non_finite_loss_raises(self):
        params = small_params(seed=2)
        obs = np.ones((2, 4))
        with pytest.raises(TrainingDiverged):
            ppo_loss_and_grads(params, obs, np.array([0, 1]), np.zeros(2),
                               np.zeros(2), np.array([1e200, -1e200]),
                               0.3, 1.0, 0.0)

    def test_loss_decreases_on_frozen_batch(self):
        params = small_params(seed=31, input_dim=5, hidden=(8,), n_actions=4)
        rng = np.random.default_rng(6)
        n = 32
        obs = rng.normal(size=(n, 5))
        actions = rng.integers(0, 4, size=n)
        logp_old = log_softmax(forward_policy(params, obs))[np.arange(n), actions]
        adv = rng.normal(size=n)
        ret = rng.normal(size=n)
        adam = init_adam(params)

        def full_loss(p):
            stats, _ = ppo_loss_and_grads(p, obs, actions, logp_old, adv, ret,
                                          0.3, 1.0, 0.0)
            return stats.loss

        first = full_loss(params)
        for _ in range(60):
            _, grads = ppo_loss_and_grads(params, obs, actions, logp_old, adv, ret,
                                          0.3, 1.0, 0.0)
            params, adam = adam_step(params, grads, adam, lr=3e-3)
        assert full_loss(params) < first


class TestAdam:
    def test_first_step_is_signed_lr(self):
        params = small_params(seed=4)
        grads = zeros_like_params(params)
        grads.policy[0][0][:] = 0.7
        grads.policy[0][1][:] = -1.3
        state = init_adam(params)
        new, state2 = adam_step(params, grads, state, lr=0.001)
        dw = new.policy[0][0] - params.policy[0][0]
        np.testing.assert_allclose(dw, -0.001 * np.sign(0.7), rtol=1e-6)
        db = new.policy[0][1] - params.policy[0][1]
        np.testing.assert_allclose(db, 0.001, rtol=1e-6)
        assert state2.t == 1
        # Untouched tensors stay put.
        np.testing.assert_array_equal(new.value[0][0], params.value[0][0])

    def test_zero_gradient_no_move(self):
        params = small_params(seed=5)
        state = init_adam(params)
        new, state2 = adam_step(params, zeros_like_params(params), state, lr=0.01)
        for a, b in zip(param_tensors(params), param_tensors(new)):
            np.testing.assert_array_equal(a, b)
        assert state2.t == 1

    def test_two_steps_match_scalar_reference(self):
        # Hand-rolled two-step trace for a single parameter.
        lr, b1, b2, eps = 0.001, 0.9, 0.999, 1e-8
        theta = 0.5
        g1, g2 = 0.3, -0.2
        m = v = 0.0
        trace = []
        for t, g in ((1, g1), (2, g2)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
            trace.append(theta)

        arch = ArchSpec(input_dim=1, hidden=(), n_actions=2)
        params = init_params(arch, np.random.default_rng(0))
        params.value[0][0][0, 0] = 0.5
        state = init_adam(params)
        for g, expected in zip((g1, g2), trace):
            grads = zeros_like_params(params)
            grads.value[0][0][0, 0] = g
            params, state = adam_step(params, grads, state, lr=lr)
            assert params.value[0][0][0, 0] == pytest.approx(expected, abs=1e-15)
        assert state.t == 2

    def test_moments_accumulate(self):
        params = small_params(seed=9)
        grads = zeros_like_params(params)
        grads.policy[0][0][0, 0] = 1.0
        state = init_adam(params)
        _, state = adam_step(params, grads, state, lr=0.001)
        assert state.m[0][0, 0] == pytest.approx(0.1)
        assert state.v[0][0, 0] == pytest.approx(0.001)
