import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qigmn import envs
from qigmn.envs import StepAfterEnd, solved, wrap_angle

GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_trajectories.json").read_text())


@pytest.mark.parametrize("name", sorted(GOLDEN))
def test_golden_trajectories(name):
    # Recorded once from an independent classic-control implementation.
    data = GOLDEN[name]
    env = envs.make(name)
    env.reset(0)
    env.state = np.array(data["initial_state"])
    for action, state, term in zip(data["actions"], data["states"], data["terminated"]):
        res = env.step(action)
        np.testing.assert_allclose(env.state, state, rtol=0, atol=1e-12)
        assert res.terminated == term


@pytest.mark.parametrize("seed", range(20))
def test_reset_distributions(seed):
    pos, vel = envs.make("mountain_car_v0").reset(seed)
    assert -0.6 <= pos <= -0.4 and vel == 0.0
    obs = envs.make("cartpole_v0").reset(seed)
    assert np.all(np.abs(obs) <= 0.05)
    obs = envs.make("acrobot_v0").reset(seed)
    assert np.all(np.abs(obs) <= 0.1)


@pytest.mark.parametrize("name", envs.ENV_NAMES)
def test_same_seed_same_observation(name):
    a, b = envs.make(name), envs.make(name)
    np.testing.assert_array_equal(a.reset(42), b.reset(42))
    assert not np.array_equal(a.reset(42), a.reset(43))


def test_mountain_car_one_step():
    env = envs.make("mountain_car_v0")
    env.reset(0)
    env.state = np.array([-0.5, 0.0])
    res = env.step(1)
    assert res.observation[1] == pytest.approx(-0.0025 * math.cos(-1.5), abs=1e-15)
    assert res.reward == -1.0
    assert not res.terminated and not res.truncated


def test_mountain_car_rest_at_valley_bottom():
    env = envs.make("mountain_car_v0")
    env.reset(0)
    bottom = -math.pi / 6
    env.state = np.array([bottom, 0.0])
    for _ in range(200):
        if env.finished:
            break
        env.step(1)
    assert abs(env.state[0] - bottom) < 1e-12


def test_mountain_car_reaches_goal():
    # energy pumping: push along the velocity
    env = envs.make("mountain_car_v0")
    obs = env.reset(3)
    for _ in range(200):
        res = env.step(2 if obs[1] >= 0 else 0)
        obs = res.observation
        if res.done:
            break
    assert res.terminated and not res.truncated
    assert obs[0] >= 0.5


def balance(obs):
    x, xd, th, thd = obs
    return int(th + 0.5 * thd + 0.05 * xd > 0)


def test_cartpole_truncates_at_200():
    env = envs.make("cartpole_v0")
    obs = env.reset(7)
    total = 0.0
    for _ in range(200):
        res = env.step(balance(obs))
        obs = res.observation
        total += res.reward
        assert not res.terminated
    assert res.truncated and total == 200.0
    with pytest.raises(StepAfterEnd):
        env.step(0)


def test_cartpole_v1_runs_500():
    env = envs.make("cartpole_v1")
    obs = env.reset(7)
    for i in range(500):
        res = env.step(balance(obs))
        obs = res.observation
        if res.done:
            break
    assert i == 499 and res.truncated and not res.terminated


def test_cartpole_terminates_when_pole_falls():
    env = envs.make("cartpole_v0")
    env.reset(0)
    steps = 0
    while True:
        res = env.step(1)
        steps += 1
        if res.done:
            break
    assert res.terminated and not res.truncated and steps < 50
    assert res.reward == 1.0


def test_step_before_reset_fails():
    with pytest.raises(StepAfterEnd):
        envs.make("acrobot_v1").step(0)


def test_unknown_env():
    with pytest.raises(ValueError):
        envs.make("pendulum_v0")


def test_acrobot_action_sets():
    assert envs.make("acrobot_v0").spec.action_count == 4
    assert envs.make("acrobot_v0").spec.max_steps == 200
    assert envs.make("acrobot_v1").spec.action_count == 3
    assert envs.make("acrobot_v1").spec.max_steps == 500


def test_acrobot_first_joint_torque_moves_first_link():
    env = envs.make("acrobot_v0")
    env.reset(0)
    env.state = np.zeros(4)
    env.step(0)  # +1 on joint 1
    assert env.state[2] > 0
    env.state = np.zeros(4)
    env.step(1)  # -1 on joint 1
    assert env.state[2] < 0


@pytest.mark.parametrize("x", [0.0, math.pi, -math.pi, 3 * math.pi, -3 * math.pi, 7.0, -7.0, 1e-17])
def test_wrap_angle_range(x):
    y = wrap_angle(x)
    assert -math.pi < y <= math.pi
    assert math.isclose(math.cos(y), math.cos(x), abs_tol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(envs.ENV_NAMES), st.integers(0, 10_000), st.lists(st.integers(0, 3), min_size=1, max_size=300))
def test_observations_within_bounds(name, seed, actions):
    env = envs.make(name)
    obs = env.reset(seed)
    low, high = np.array(env.spec.low), np.array(env.spec.high)
    assert np.all(obs >= low) and np.all(obs <= high)
    for a in actions:
        res = env.step(a % env.spec.action_count)
        assert np.all(res.observation >= low) and np.all(res.observation <= high)
        assert not (res.terminated and res.truncated)
        if name.startswith("acrobot"):
            assert np.all(np.abs(res.observation[:2]) <= math.pi)
        if res.done:
            break


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(envs.ENV_NAMES), st.integers(0, 10_000))
def test_trajectories_deterministic(name, seed):
    actions = np.random.default_rng(seed).integers(0, 4, size=120)
    runs = []
    for _ in range(2):
        env = envs.make(name)
        traj = [env.reset(seed)]
        for a in actions:
            res = env.step(int(a) % env.spec.action_count)
            traj.append(res.observation)
            if res.done:
                break
        runs.append(np.array(traj))
    assert np.array_equal(runs[0], runs[1])


def test_truncation_only_at_step_limit():
    env = envs.make("acrobot_v0")
    env.reset(1)
    n = 0
    while True:
        res = env.step(2)
        n += 1
        if res.done:
            break
    if res.truncated:
        assert n == env.spec.max_steps
    else:
        assert n < env.spec.max_steps


def test_solved_examples():
    assert solved([200.0] * 100, 195.0) == 0
    assert solved([200.0] * 99, 195.0) is None
    assert solved([0.0] * 50 + [200.0] * 100, 195.0) == 48  # two zeros still fit under 195 * 100
    assert solved([-120.0] * 100, -110.0) is None
    assert solved([-110.0] * 100, -110.0) == 0


@settings(max_examples=50)
@given(st.lists(st.integers(-200, 200), min_size=0, max_size=250), st.integers(-200, 200))
def test_solved_matches_brute_force(returns, threshold):
    expected = next(
        (i for i in range(len(returns) - 99) if sum(returns[i : i + 100]) >= threshold * 100),
        None,
    )
    assert solved([float(r) for r in returns], float(threshold)) == expected
