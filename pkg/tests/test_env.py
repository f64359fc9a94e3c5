import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptdrl.env import FULL_PASS, AttributionEnv, EpisodeSchedule, RewardScheme
from aptdrl.errors import ActionOutOfRange, EmptySplit, EpisodeFinished

from conftest import make_split


def split_of(n, k=3, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    return make_split(rng.random((n, dim)), np.arange(n) % k, k)


def run_episode(env, policy):
    obs = [env.reset()]
    rewards = []
    done = False
    while not done:
        nxt, r, done = env.step(policy(env))
        rewards.append(r)
        obs.append(nxt)
    return obs, rewards


def test_spaces():
    env = AttributionEnv(split_of(5, k=3, dim=7))
    assert env.spaces() == (3, 7)
    assert env.num_actions == 3 and env.observation_dim == 7


def test_single_record_split():
    s = split_of(1, k=1)
    env = AttributionEnv(s)
    assert np.array_equal(env.reset(), s.X[0])
    _, r, done = env.step(0)
    assert r == 1.0 and done


def test_sequential_order_starts_at_first_record():
    s = split_of(6)
    env = AttributionEnv(s, schedule=EpisodeSchedule(order="sequential"))
    assert np.array_equal(env.reset(), s.X[0])


def test_same_seed_same_first_observation():
    s = split_of(20)
    a = AttributionEnv(s, schedule=EpisodeSchedule(seed=4)).reset()
    b = AttributionEnv(s, schedule=EpisodeSchedule(seed=4)).reset()
    assert np.array_equal(a, b)


def test_rewards_default_scheme():
    s = split_of(4)
    env = AttributionEnv(s, schedule=EpisodeSchedule(order="sequential"))
    env.reset()
    assert env.step(int(s.y[0]))[1] == 1.0
    assert env.step((int(s.y[1]) + 1) % 3)[1] == 0.0


def test_custom_reward_scheme():
    env = AttributionEnv(split_of(4), RewardScheme(2.0, -1.0), EpisodeSchedule(order="sequential"))
    env.reset()
    assert env.step(1)[1] == -1.0
    with pytest.raises(ValueError):
        RewardScheme(0.0, 0.0)


def test_horizon_three():
    env = AttributionEnv(split_of(10), schedule=EpisodeSchedule(horizon=3))
    env.reset()
    assert [env.step(0)[2] for _ in range(3)] == [False, False, True]


def test_errors():
    env = AttributionEnv(split_of(3))
    with pytest.raises(EpisodeFinished):
        env.step(0)
    env.reset()
    with pytest.raises(ActionOutOfRange):
        env.step(3)
    with pytest.raises(ActionOutOfRange):
        env.step(-1)
    env2 = AttributionEnv(split_of(2), schedule=EpisodeSchedule(horizon=1))
    env2.reset()
    env2.step(0)
    with pytest.raises(EpisodeFinished):
        env2.step(0)
    with pytest.raises(EmptySplit):
        AttributionEnv(make_split(np.zeros((0, 2)), np.zeros(0, int), 2)).reset()


def test_schedule_validation():
    for bad in ({"horizon": 0}, {"horizon": "forever"}, {"order": "random"}, {"vary_horizon": (5, 2)}):
        with pytest.raises(ValueError):
            EpisodeSchedule(**bad)


def test_observation_is_next_sample_then_zeros_at_pass_end():
    s = split_of(4)
    env = AttributionEnv(s, schedule=EpisodeSchedule(order="sequential"))
    obs, _ = run_episode(env, lambda e: 0)
    assert all(np.array_equal(o, x) for o, x in zip(obs[:4], s.X))
    assert not obs[4].any()


def test_cursor_continues_across_short_episodes():
    s = split_of(5)
    env = AttributionEnv(s, schedule=EpisodeSchedule(horizon=2, order="sequential"))
    lengths = []
    firsts = []
    for _ in range(3):
        obs, rewards = run_episode(env, lambda e: 0)
        firsts.append(obs[0])
        lengths.append(len(rewards))
    # min(T, remaining): 2, 2, then the single leftover sample
    assert lengths == [2, 2, 1]
    assert [np.array_equal(f, s.X[i]) for f, i in zip(firsts, (0, 2, 4))] == [True] * 3


def test_full_pass_covers_every_record_once():
    s = split_of(17)
    env = AttributionEnv(s, schedule=EpisodeSchedule(horizon=FULL_PASS, seed=3))
    env.reset()
    seen = []
    done = False
    while not done:
        seen.append(env.true_label)
        _, _, done = env.step(0)
    assert len(seen) == 17 and sorted(seen) == sorted(s.y.tolist())


def test_vary_horizon_draws_in_range():
    env = AttributionEnv(split_of(1000), schedule=EpisodeSchedule(vary_horizon=(3, 6), seed=1))
    lengths = {len(run_episode(env, lambda e: 0)[1]) for _ in range(60)}
    assert lengths <= {3, 4, 5, 6} and len(lengths) > 1


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_oracle_earns_one_per_step(n, horizon, seed):
    env = AttributionEnv(split_of(n, seed=seed), schedule=EpisodeSchedule(horizon=horizon, seed=seed))
    for _ in range(3):
        _, rewards = run_episode(env, lambda e: e.true_label)
        assert sum(rewards) == len(rewards) * 1.0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_episode_length_is_min_of_horizon_and_remaining(n, horizon, seed):
    env = AttributionEnv(split_of(n, seed=seed), schedule=EpisodeSchedule(horizon=horizon, seed=seed))
    remaining = 0
    for _ in range(5):
        if remaining == 0:
            remaining = n
        _, rewards = run_episode(env, lambda e: 0)
        assert len(rewards) == min(horizon, remaining)
        remaining -= len(rewards)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**32 - 1))
def test_dynamics_independent_of_actions(n, seed):
    base = AttributionEnv(split_of(n, seed=seed), schedule=EpisodeSchedule(horizon=5, seed=seed))
    a, b = base.clone(), base.clone()
    rng = np.random.default_rng(seed)
    for _ in range(4):
        oa, ra = run_episode(a, lambda e: 0)
        ob, rb = run_episode(b, lambda e: int(rng.integers(e.num_actions)))
        assert len(oa) == len(ob)
        assert all(np.array_equal(x, y) for x, y in zip(oa, ob))
        assert set(ra) | set(rb) <= {0.0, 1.0}
