import math

import numpy as np
import pytest

from wavopt.cmdp import exact_objective, uniform_policy
from wavopt.envs import (
    ANGLE_HARD_LIMIT,
    ANGLE_SOFT_LIMIT,
    CARTPOLE_ZONES,
    AcrobotEnv,
    CartpoleEnv,
    ReturnTracker,
    TabularEnv,
    acrobot_energy,
    acrobot_step,
    acrobot_tip_height,
    cartpole_angle_penalty,
    cartpole_step,
    cartpole_zone_penalty,
    episode_return,
    make_env,
    random_tabular_cmdp,
)


def test_zone_indicator_boundaries():
    # closed intervals: endpoints are inside
    for lo, hi in CARTPOLE_ZONES:
        assert cartpole_zone_penalty(lo) == 1
        assert cartpole_zone_penalty(hi) == 1
        assert cartpole_zone_penalty((lo + hi) / 2) == 1
        assert cartpole_zone_penalty(lo - 1e-9) == 0 or lo == -2.4
        assert cartpole_zone_penalty(hi + 1e-9) == 0 or hi == 2.4
    assert cartpole_zone_penalty(0.5) == 0
    assert cartpole_zone_penalty(-2.0) == 0


def test_angle_indicator_strict():
    assert cartpole_angle_penalty(ANGLE_SOFT_LIMIT) == 0
    assert cartpole_angle_penalty(ANGLE_SOFT_LIMIT + 1e-12) == 1
    assert cartpole_angle_penalty(-ANGLE_SOFT_LIMIT - 1e-9) == 1
    assert cartpole_angle_penalty(0.0) == 0


def test_cartpole_push_direction():
    s0 = np.zeros(4)
    right, _, _, _ = cartpole_step(s0, 1)
    left, _, _, _ = cartpole_step(s0, 0)
    assert right[1] > 0 > left[1]
    # symmetric start: mirrored actions give mirrored states
    assert np.allclose(right, -left)


def test_cartpole_semi_implicit_order():
    # position must move with the *new* velocity: from rest, one step
    # changes x by dt * (dt * x_acc), not zero
    s0 = np.zeros(4)
    nxt, _, _, _ = cartpole_step(s0, 1)
    dt = 0.02
    assert nxt[0] != 0.0
    assert nxt[0] == pytest.approx(dt * nxt[1], rel=0, abs=0)


def test_cartpole_failure_angle():
    s = np.array([0.0, 0.0, ANGLE_HARD_LIMIT - 1e-4, 3.0])
    nxt, r, g, done = cartpole_step(s, 1)
    assert done
    assert r == 1.0
    assert g[1] == 1


def test_cartpole_wall_clamp_no_termination():
    s = np.array([2.39, 5.0, 0.0, 0.0])
    nxt, _, g, done = cartpole_step(s, 1)
    assert nxt[0] == 2.4
    assert not done
    assert g[0] == 1  # wall sits inside the outermost zone


def test_cartpole_episode_cap_and_reset_determinism():
    env = CartpoleEnv(seed=7)
    s1 = env.reset(rng=123)
    env2 = CartpoleEnv(seed=99)
    s2 = env2.reset(rng=123)
    assert np.array_equal(s1, s2)
    assert np.all(np.abs(s1) <= 0.05)

    env.reset(rng=0)
    done = False
    steps = 0
    while not done:
        _, _, _, done = env.step(1.0 if env.state[2] < 0 else -1.0)
        steps += 1
        assert steps <= 250
    assert steps <= 250


def test_cartpole_continuous_action_mapping():
    env = CartpoleEnv()
    assert env.discretize(0.0) == 1
    assert env.discretize(0.7) == 1
    assert env.discretize(-1e-9) == 0


def test_acrobot_energy_conserved_unactuated():
    # free swing from a displaced start; RK4 at dt=0.02 over a full
    # 500-step episode must hold total energy to 1%
    env = AcrobotEnv()
    s = np.array([1.0, 0.5, 0.0, 0.0])
    e0 = acrobot_energy(s)
    scale = max(abs(e0), 1.0)
    for _ in range(500):
        s, _, _, _ = acrobot_step(s, 1)  # zero torque
    drift = abs(acrobot_energy(s) - e0)
    assert drift <= 0.01 * scale


def test_acrobot_torque_injects_energy():
    s = np.array([0.1, 0.0, 0.0, 0.0])
    for _ in range(50):
        s, _, _, _ = acrobot_step(s, 2)
    assert acrobot_energy(s) > acrobot_energy(np.array([0.1, 0.0, 0.0, 0.0]))


def test_acrobot_reward_threshold():
    # hanging: height -2, no reward; inverted: height 2, reward
    low = np.array([0.0, 0.0, 0.0, 0.0])
    high = np.array([math.pi, 0.0, 0.0, 0.0])
    assert acrobot_tip_height(low) == pytest.approx(-2.0)
    assert acrobot_tip_height(high) == pytest.approx(2.0)
    _, r_low, _, _ = acrobot_step(low, 1)
    assert r_low == 0.0
    # start inverted with no velocity: one small step keeps height > 0.5
    _, r_high, _, _ = acrobot_step(high, 1)
    assert r_high == 1.0


def test_acrobot_constraint_indicators_pre_step():
    s = np.array([0.0, 0.0, -0.4, -0.3])
    _, _, g, _ = acrobot_step(s, 2)  # torque while both velocities negative
    assert tuple(g) == (1, 1)
    _, _, g, _ = acrobot_step(s, 1)  # no torque: g1 off, g2 still on
    assert tuple(g) == (0, 1)
    s_pos = np.array([0.0, 0.0, 0.4, 0.3])
    _, _, g, _ = acrobot_step(s_pos, 0)
    assert tuple(g) == (0, 0)


def test_acrobot_angle_wrap():
    s = np.array([math.pi - 1e-3, 0.0, 5.0, 0.0])
    nxt, _, _, _ = acrobot_step(s, 1)
    assert -math.pi <= nxt[0] <= math.pi
    # wrapping leaves the energy untouched
    assert acrobot_energy(nxt) == pytest.approx(
        acrobot_energy(np.array([nxt[0] + 2 * math.pi, *nxt[1:]])), rel=1e-12
    )


def test_acrobot_action_mapping():
    env = AcrobotEnv()
    assert env.discretize(-1.0) == 0
    assert env.discretize(-0.34) == 0
    assert env.discretize(-1.0 / 3.0) == 1
    assert env.discretize(0.0) == 1
    assert env.discretize(1.0 / 3.0) == 1
    assert env.discretize(0.34) == 2
    assert env.discretize(1.0) == 2


def test_acrobot_episode_cap():
    env = AcrobotEnv(max_steps=40)
    env.reset(rng=3)
    steps = 0
    done = False
    while not done:
        _, _, _, done = env.step(0.0)
        steps += 1
    assert steps == 40


def test_return_tracker_convention():
    tr = ReturnTracker()
    assert tr.value == -250.0
    for _ in range(250):
        tr.update(1.0)
    assert tr.value == pytest.approx(0.0)
    assert episode_return([1.0] * 100) == pytest.approx(-150.0)


def test_random_cmdp_feasible_bounds():
    cmdp = random_tabular_cmdp(6, 3, 2, seed=11)
    uni = uniform_policy(cmdp)
    for i in range(2):
        j = exact_objective(cmdp, uni, signal=i + 1)
        assert j <= cmdp.bounds[i] - 0.009
    assert np.all(cmdp.transitions >= 0)
    assert np.allclose(cmdp.transitions.sum(axis=2), 1.0)


def test_tabular_env_rollout_matches_exact_objective():
    # long Monte-Carlo average of discounted returns under the uniform
    # policy should approach the linear-solve objective
    cmdp = random_tabular_cmdp(4, 2, 1, seed=5, gamma=0.8)
    env = TabularEnv(cmdp, seed=0)
    exact = exact_objective(cmdp, uniform_policy(cmdp), signal=0)
    rng = np.random.default_rng(42)
    total = 0.0
    n_ep = 3000
    for _ in range(n_ep):
        s = env.reset(rng=rng)
        done = False
        disc, t = 0.0, 0
        while not done:
            a = int(rng.integers(cmdp.n_actions))
            s, r, g, done = env.step(a)
            disc += cmdp.gamma**t * r
            t += 1
        total += disc
    assert total / n_ep == pytest.approx(exact, abs=0.02)


def test_make_env():
    assert isinstance(make_env("cartpole"), CartpoleEnv)
    assert isinstance(make_env("acrobot"), AcrobotEnv)
    with pytest.raises(ValueError):
        make_env("mountaincar")


def test_step_before_reset_raises():
    env = CartpoleEnv()
    with pytest.raises(RuntimeError):
        env.step(1.0)
