import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pponav.env import (EnvConfig, EpisodeConfig, Event, GoalPoint, NavigationEnv,
                        RewardParams, SamplingRegions, flatten_observation,
                        goal_distance, heading_error, observation_dim, observe,
                        reward, sample_start_goal)
from pponav.errors import ConfigError
from pponav.vehicle import VehicleState
from pponav.world import Obstacle, Rect, WorldConfig

import oracles
from conftest import make_world


class TestReward:
    def test_progress_only(self):
        assert reward(10.0, 9.5, False, False) == 9.0

    def test_no_progress_pays_step_penalty(self):
        for d in (0.7, 5.0, 123.4):
            assert reward(d, d, False, False) == -1.0

    def test_goal_bonus(self):
        r = reward(0.6, 0.4, True, False)
        assert r == oracles.reward_oracle(0.6, 0.4, True, False)
        assert r == pytest.approx(2003.0, abs=1e-9)

    def test_collision_penalty(self):
        r = reward(5.0, 5.1, False, True)
        assert r == oracles.reward_oracle(5.0, 5.1, False, True)
        assert r == pytest.approx(-1003.0, abs=1e-9)

    @given(d_prev=st.floats(0, 60), d_curr=st.floats(0, 60),
           goal=st.booleans(), coll=st.booleans())
    @settings(max_examples=200)
    def test_matches_oracle_exactly(self, d_prev, d_curr, goal, coll):
        assert reward(d_prev, d_curr, goal, coll) == \
            oracles.reward_oracle(d_prev, d_curr, goal, coll)

    def test_custom_params(self):
        p = RewardParams(progress_scale=1.0, goal_bonus=10.0,
                         collision_penalty=5.0, step_penalty=0.0)
        assert reward(2.0, 1.0, False, False, p) == 1.0
        assert reward(2.0, 2.0, True, False, p) == 10.0
        assert reward(2.0, 2.0, False, True, p) == -5.0


class TestHeadingError:
    def test_dead_ahead(self):
        assert heading_error(VehicleState(0, 0, 0), GoalPoint(5, 0)) == 0.0

    def test_goal_to_the_left(self):
        assert heading_error(VehicleState(0, 0, 0), GoalPoint(0, 5)) == \
            pytest.approx(math.pi / 2)

    def test_goal_behind_wraps_to_pi(self):
        assert heading_error(VehicleState(0, 0, math.pi), GoalPoint(5, 0)) == math.pi

    def test_at_goal_defined_zero(self):
        assert heading_error(VehicleState(3, 4, 1.0), GoalPoint(3, 4)) == 0.0

    @given(x=st.floats(-10, 10), y=st.floats(-10, 10),
           yaw=st.floats(-math.pi, math.pi),
           gx=st.floats(-10, 10), gy=st.floats(-10, 10))
    def test_range(self, x, y, yaw, gx, gy):
        h = heading_error(VehicleState(x, y, yaw), GoalPoint(gx, gy))
        assert -math.pi < h <= math.pi


class TestObserve:
    def test_far_field_depth_is_ones(self):
        w = make_world(xmin=-100, xmax=100, ymin=-100, ymax=100)
        obs = observe(VehicleState(0, 0, 0), GoalPoint(3, 4), w)
        assert np.all(obs.depth == 1.0)
        assert obs.distance == 5.0

    def test_depth_normalized_to_unit(self):
        w = make_world()
        obs = observe(VehicleState(0, 0, 0), GoalPoint(3, 4), w)
        assert np.all(obs.depth > 0.0)
        assert np.all(obs.depth <= 1.0)

    def test_mirrored_scene(self):
        # Mirror everything about the x axis: depth image flips left/right,
        # heading error flips sign, distance unchanged.
        o = Obstacle(kind="cylinder", center=(4.0, 2.0), radius=1.0)
        om = Obstacle(kind="cylinder", center=(4.0, -2.0), radius=1.0)
        w = make_world(obstacles=[o])
        wm = make_world(obstacles=[om])
        obs = observe(VehicleState(0.0, 1.0, 0.4), GoalPoint(5.0, 3.0), w)
        mirrored = observe(VehicleState(0.0, -1.0, -0.4), GoalPoint(5.0, -3.0), wm)
        np.testing.assert_allclose(mirrored.depth, obs.depth[:, ::-1], atol=1e-9)
        assert mirrored.heading_error == pytest.approx(-obs.heading_error)
        assert mirrored.distance == pytest.approx(obs.distance)

    def test_flatten_layout(self):
        w = make_world()
        obs = observe(VehicleState(0, 0, 0.3), GoalPoint(5, 1), w)
        vec = flatten_observation(obs, w.arena_diagonal)
        assert vec.shape == (observation_dim(w),) == (110,)
        np.testing.assert_array_equal(vec[:108], obs.depth.ravel())
        assert vec[108] == obs.heading_error / math.pi
        assert vec[109] == obs.distance / w.arena_diagonal
        assert np.all(np.abs(vec) <= 1.0)


class TestSampling:
    def test_degenerate_rect_is_a_point(self):
        regions = SamplingRegions(start=Rect(1, 2, 1, 2), goal=Rect(5, 5, 5, 5))
        rng = np.random.default_rng(0)
        for _ in range(5):
            start, goal = sample_start_goal(regions, rng, goal_radius=0.5)
            assert (start.x, start.y) == (1.0, 2.0)
            assert (goal.x, goal.y) == (5.0, 5.0)

    def test_unit_square_means(self):
        regions = SamplingRegions(start=Rect(0, 0, 1, 1), goal=Rect(5, 5, 6, 6))
        rng = np.random.default_rng(42)
        starts = [sample_start_goal(regions, rng, 0.1)[0] for _ in range(10_000)]
        xs = np.array([s.x for s in starts])
        ys = np.array([s.y for s in starts])
        assert abs(xs.mean() - 0.5) < 0.02
        assert abs(ys.mean() - 0.5) < 0.02

    def test_membership(self):
        start_rect = Rect(0, 0, 1, 1)
        goal_rect = Rect(8, 8, 9, 9)
        regions = SamplingRegions(start=start_rect, goal=goal_rect)
        rng = np.random.default_rng(3)
        for _ in range(200):
            start, goal = sample_start_goal(regions, rng, 0.5)
            assert start_rect.contains(start.x, start.y)
            assert goal_rect.contains(goal.x, goal.y)
            assert math.hypot(goal.x - start.x, goal.y - start.y) > 0.5
            assert -math.pi < start.yaw <= math.pi

    def test_separation_enforced_by_rejection(self):
        # Overlapping regions: some draws violate the separation rule and are
        # rejected, but every returned pair satisfies it.
        regions = SamplingRegions(start=Rect(0, 0, 2, 2), goal=Rect(0, 0, 2, 2))
        rng = np.random.default_rng(9)
        for _ in range(300):
            start, goal = sample_start_goal(regions, rng, goal_radius=1.0)
            assert math.hypot(goal.x - start.x, goal.y - start.y) > 1.0

    def test_impossible_separation_raises(self):
        regions = SamplingRegions(start=Rect(1, 1, 1, 1), goal=Rect(1.2, 1, 1.2, 1))
        with pytest.raises(ConfigError, match="goal_radius"):
            sample_start_goal(regions, np.random.default_rng(0), goal_radius=0.5)

    def test_same_seed_same_episode(self):
        regions = SamplingRegions(start=Rect(0, 0, 1, 1), goal=Rect(5, 5, 6, 6))
        a = sample_start_goal(regions, np.random.default_rng(123), 0.5)
        b = sample_start_goal(regions, np.random.default_rng(123), 0.5)
        assert a == b


class TestNavigationEnv:
    def _env(self, world=None, seed=0, **cfg_kwargs):
        world = world or make_world()
        cfg = EnvConfig(**cfg_kwargs)
        return NavigationEnv(world, cfg, rng=np.random.default_rng(seed))

    def test_reset_counters(self):
        env = self._env()
        env.reset("train")
        assert env.step_count == 0
        assert not env.done
        assert env.event is Event.NONE

    def test_reset_samples_from_train_region(self):
        world = make_world()
        env = self._env(world)
        for _ in range(50):
            env.reset("train")
            s = env.state
            assert world.start_region.contains(s.x, s.y)

    def test_mode_selects_regions(self):
        world = make_world()
        train = SamplingRegions(start=Rect(-5, -5, -4, -4), goal=Rect(4, 4, 5, 5))
        test = SamplingRegions(start=Rect(0, -5, 1, -4), goal=Rect(0, 4, 1, 5))
        env = NavigationEnv(world, EnvConfig(train=train, test=test),
                            rng=np.random.default_rng(0))
        for _ in range(20):
            env.reset("train")
            assert train.start.contains(env.state.x, env.state.y)
            env.reset("test")
            assert test.start.contains(env.state.x, env.state.y)
        with pytest.raises(ValueError):
            env.reset("validation")

    def test_same_seed_resets_identically(self):
        a, b = self._env(seed=77), self._env(seed=77)
        a.reset("train")
        b.reset("train")
        assert a.episode == b.episode

    def test_stationary_action(self):
        env = self._env()
        env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(5, 0), 40))
        out = env.step(2)  # v=0, yaw rate 0
        assert env.state == VehicleState(0, 0, 0)
        assert out.reward == -1.0
        assert not out.done
        assert out.event is Event.NONE

    def test_goal_event_with_bonus(self):
        env = self._env()
        env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(0.3, 0), 40))
        out = env.step(7)  # v=1 straight: moves 0.2, leaving 0.1 < 0.5
        assert out.event is Event.GOAL
        assert out.done
        assert out.reward == pytest.approx(20.0 * 0.2 + 2000.0 - 1.0)

    def test_goal_checked_before_collision(self):
        # Goal disc flush against the east wall: entering it also enters the
        # wall's inflation zone, but the success check wins.
        world = make_world()
        env = self._env(world)
        env.reset_from(EpisodeConfig(VehicleState(9.3, 0, 0), GoalPoint(9.7, 0), 40))
        out = env.step(12)  # v=2 straight: lands exactly on the goal
        assert out.event is Event.GOAL
        assert out.reward > 1000.0  # bonus, not penalty

    def test_collision_with_wall(self):
        env = self._env()
        env.reset_from(EpisodeConfig(VehicleState(9.6, 0, 0), GoalPoint(-5, 0), 40))
        out = env.step(12)  # v=2 straight into the wall 0.4 m ahead
        assert out.event is Event.COLLISION
        assert out.done
        assert out.reward == pytest.approx(20.0 * (-0.4) - 1000.0 - 1.0, abs=1e-9)

    def test_collision_with_obstacle(self):
        world = make_world(obstacles=[Obstacle(kind="cylinder", center=(5.0, 0.0),
                                               radius=1.0)])
        env = self._env(world)
        env.reset_from(EpisodeConfig(VehicleState(3.9, 0, 0), GoalPoint(9, 0), 40))
        out = env.step(12)  # moves to x=4.3, 0.3 m inside the footprint
        assert out.event is Event.COLLISION

    def test_timeout_is_truncation(self):
        env = self._env(max_steps=3)
        env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(5, 0), 3))
        for _ in range(2):
            out = env.step(2)
            assert out.event is Event.NONE
        out = env.step(2)
        assert out.event is Event.TIMEOUT
        assert out.done
        # Timeout pays the usual step reward with no terminal term.
        assert out.reward == -1.0

    def test_step_after_done_raises(self):
        env = self._env(max_steps=1)
        env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(5, 0), 1))
        env.step(2)
        with pytest.raises(RuntimeError):
            env.step(2)

    def test_reward_uses_distance_progression(self):
        env = self._env()
        env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(5, 0), 40))
        d0 = goal_distance(env.state, env.goal)
        out = env.step(7)  # straight toward the goal at 1 m/s
        d1 = goal_distance(env.state, env.goal)
        assert out.reward == pytest.approx(20.0 * (d0 - d1) - 1.0, abs=1e-12)
        assert out.reward == pytest.approx(20.0 * 0.2 - 1.0)

    def test_observation_tracks_state(self):
        env = self._env()
        obs = env.reset_from(EpisodeConfig(VehicleState(0, 0, 0), GoalPoint(5, 0), 40))
        assert obs.distance == 5.0
        out = env.step(7)
        assert out.observation.distance == pytest.approx(4.8)
