import numpy as np
import pytest

from wavopt.cmdp import TabularCmdp, exact_objective
from wavopt.dist_rl import TransitionBatch
from wavopt.envs import CartpoleEnv, TabularEnv, random_tabular_cmdp
from wavopt.inference import RewardOperatorFamily, affine_family, log_family
from wavopt.nets import init_policy_nets
from wavopt.ot import agswd
from wavopt.measures import DiscreteMeasure
from wavopt.safe_rl import (
    C_CAL,
    emit_slice_params,
    estimate_objectives,
    exact_improvement_report,
    optimality_probabilities,
    policy_update_step,
    tolerance_schedule,
)

TRIANGLE = RewardOperatorFamily(
    "triangle", 0.0, 1.0, fn=lambda p: 1.0 - np.abs(2.0 * np.asarray(p, dtype=float) - 1.0)
)


def _nets(seed=0, n_signals=3, slice_count=0, use_target=True):
    return init_policy_nets(
        state_dim=4,
        action_dim=1,
        hidden_width=16,
        hidden_layers=2,
        n_quantiles=8,
        n_signals=n_signals,
        slice_count=slice_count,
        slice_dim=4,
        slice_degree=3,
        rng=np.random.default_rng(seed),
        use_target=use_target,
    )


def _batch(rng, size=32, n_constraints=2):
    return TransitionBatch(
        states=rng.normal(size=(size, 4)),
        actions=rng.uniform(-1, 1, size=(size, 1)),
        rewards=rng.uniform(0, 1, size=size),
        utilities=rng.integers(0, 2, size=(size, n_constraints)).astype(float),
        next_states=rng.normal(size=(size, 4)),
        done=rng.integers(0, 2, size=size).astype(float),
    )


# -- tolerance schedule ----------------------------------------------------------


def test_tolerance_anchor_calibration():
    assert abs(tolerance_schedule(1000, batch=128, horizon_scale=2, gamma=0.998) - 0.5) <= 1e-12


def test_tolerance_monotone_decreasing():
    taus = [tolerance_schedule(t) for t in (1, 10, 100, 1000, 10000)]
    assert all(a > b for a, b in zip(taus, taus[1:]))
    assert tolerance_schedule(1000, batch=512) < tolerance_schedule(1000, batch=32)
    with pytest.raises(ValueError):
        tolerance_schedule(0)
    assert C_CAL > 0


# -- objective estimation ---------------------------------------------------------


def test_estimate_objectives_deterministic_cmdp():
    # one-hot transitions and a point initial distribution make the
    # rollout deterministic, so the Monte-Carlo estimate must match the
    # linear-solve objective up to horizon truncation
    trans = np.zeros((3, 2, 3))
    trans[0, 0, 1] = trans[0, 1, 2] = 1.0
    trans[1, 0, 2] = trans[1, 1, 0] = 1.0
    trans[2, 0, 0] = trans[2, 1, 1] = 1.0
    rewards = np.array([[0.1, 0.9], [0.4, 0.6], [0.8, 0.2]])
    utils = np.ones((1, 3, 2)) * np.array([[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]])
    cmdp = TabularCmdp(
        trans, rewards, utils, np.array([5.0]), 0.9, initial_dist=np.array([1.0, 0.0, 0.0])
    )
    env = TabularEnv(cmdp, seed=0)
    policy = np.zeros(3, dtype=int)
    est = estimate_objectives(env, lambda s: 0, episodes=3, gamma=0.9, seed=4)
    assert est.reward == pytest.approx(exact_objective(cmdp, policy, signal=0), abs=1e-8)
    assert est.constraints[0] == pytest.approx(exact_objective(cmdp, policy, signal=1), abs=1e-8)


def test_estimate_objectives_seed_determinism():
    env = CartpoleEnv()
    policy = lambda s: -1.0 if s[2] > 0 else 1.0
    a = estimate_objectives(env, policy, episodes=4, gamma=0.99, seed=7)
    b = estimate_objectives(env, policy, episodes=4, gamma=0.99, seed=7)
    assert a.reward == b.reward
    assert np.array_equal(a.constraints, b.constraints)
    assert a.episodes == 4
    with pytest.raises(ValueError):
        estimate_objectives(env, policy, episodes=0, gamma=0.99)


# -- branched update ---------------------------------------------------------------


def test_update_branch_selection():
    rng = np.random.default_rng(1)
    bounds = np.array([1.0, 2.0])
    tol = 0.5

    nets = _nets(seed=2)
    info = policy_update_step(
        nets, _batch(rng), bounds, np.array([1.5, 2.5]), tol, 1e-3, 1e-3, 0.99
    )
    assert info.branch == 0 and info.feasible  # non-strict boundary

    nets = _nets(seed=2)
    info = policy_update_step(
        nets, _batch(rng), bounds, np.array([1.6, 7.0]), tol, 1e-3, 1e-3, 0.99
    )
    assert info.branch == 1 and not info.feasible  # lowest violated, not largest

    nets = _nets(seed=2)
    info = policy_update_step(
        nets, _batch(rng), bounds, np.array([0.0, 2.51]), tol, 1e-3, 1e-3, 0.99
    )
    assert info.branch == 2


def test_update_moves_both_networks():
    rng = np.random.default_rng(3)
    nets = _nets(seed=5)
    w_actor = [w.copy() for w in nets.actor.params.weights]
    w_critic = [w.copy() for w in nets.critic.params.weights]
    policy_update_step(
        nets, _batch(rng), np.zeros(2), np.zeros(2), 0.1, 1e-2, 1e-2, 0.99
    )
    assert any(not np.array_equal(a, b) for a, b in zip(w_actor, nets.actor.params.weights))
    assert any(not np.array_equal(a, b) for a, b in zip(w_critic, nets.critic.params.weights))


def test_update_critic_loss_decreases_frozen_targets():
    from wavopt.dist_rl import critic_gradient

    rng = np.random.default_rng(11)
    nets = _nets(seed=7, use_target=True)
    batch = _batch(rng)
    before = sum(critic_gradient(nets, batch, s, 0.99).loss for s in range(3))
    policy_update_step(nets, batch, np.zeros(2), np.ones(2), 0.1, 1e-3, 0.0, 0.99)
    after = sum(critic_gradient(nets, batch, s, 0.99).loss for s in range(3))
    assert after < before


def _mean_critic_value(nets, states, signal):
    actions = nets.actor.act_batch(states)
    out = nets.critic.forward_batch(states, actions)
    return float(out[:, signal, :].mean())


def test_actor_ascends_reward_when_feasible():
    rng = np.random.default_rng(13)
    nets = _nets(seed=9)
    batch = _batch(rng)
    before = _mean_critic_value(nets, batch.states, 0)
    policy_update_step(nets, batch, np.ones(2), np.zeros(2), 0.0, 0.0, 1e-2, 0.99)
    assert _mean_critic_value(nets, batch.states, 0) > before


def test_actor_descends_violated_constraint():
    rng = np.random.default_rng(15)
    nets = _nets(seed=17)
    batch = _batch(rng)
    before = _mean_critic_value(nets, batch.states, 2)
    info = policy_update_step(
        nets, batch, np.zeros(2), np.array([0.0, 9.0]), 0.0, 0.0, 1e-2, 0.99
    )
    assert info.branch == 2
    assert _mean_critic_value(nets, batch.states, 2) < before


def test_update_shape_validation():
    rng = np.random.default_rng(0)
    nets = _nets()
    with pytest.raises(ValueError):
        policy_update_step(nets, _batch(rng), np.zeros(3), np.zeros(3), 0.1, 1e-3, 1e-3, 0.99)
    with pytest.raises(ValueError):
        policy_update_step(nets, _batch(rng), np.zeros(2), np.zeros(3), 0.1, 1e-3, 1e-3, 0.99)


# -- adaptive slice emission --------------------------------------------------------


def test_emit_slice_params_normalized():
    nets = _nets(seed=21, slice_count=5)
    state = np.array([0.3, -0.2, 0.1, 0.6])
    slices = emit_slice_params(nets.actor, state)
    assert len(slices) == 5
    for f, offset in slices:
        assert f.dim == 4
        assert f.degree == 3
        assert np.linalg.norm(f.coefficients) == pytest.approx(1.0, abs=1e-9)
        assert isinstance(offset, float)


def test_emit_slice_params_usable_for_sliced_distance():
    nets = _nets(seed=23, slice_count=4)
    slices = emit_slice_params(nets.actor, np.zeros(4))
    rng = np.random.default_rng(2)
    mu = DiscreteMeasure(rng.normal(size=(5, 4)), np.full(5, 0.2))
    nu = DiscreteMeasure(rng.normal(size=(5, 4)), np.full(5, 0.2))
    d = agswd(mu, nu, 2.0, slices)
    assert d >= 0.0
    assert agswd(mu, mu, 2.0, slices) == pytest.approx(0.0, abs=1e-12)


def test_emit_slice_params_requires_head():
    nets = _nets(seed=25, slice_count=0)
    with pytest.raises(ValueError):
        emit_slice_params(nets.actor, np.zeros(4))


# -- exact improvement oracle ---------------------------------------------------------


def test_optimality_probabilities_bracket():
    cmdp = random_tabular_cmdp(4, 2, 1, seed=3, gamma=0.9)
    q = np.array([[0.0, 10.0], [5.0, 12.0], [1.0, 2.0], [0.0, 0.0]])
    p = optimality_probabilities(cmdp, q)
    assert np.all(p >= 1e-6) and np.all(p <= 1.0)
    assert p[0, 1] == pytest.approx(1.0)  # q = 1/(1-gamma) maps to 1
    assert p[0, 0] == 1e-6  # floor


def test_exact_improvement_monotone_and_optimal():
    for seed in (0, 1, 2, 3):
        cmdp = random_tabular_cmdp(6, 3, 1, seed=seed, gamma=0.9)
        for fam in (affine_family(0.0, 1.0), log_family(0.0, 1.0)):
            rep = exact_improvement_report(cmdp, fam)
            assert rep.converged
            assert rep.monotone(1e-6)
            assert abs(rep.final_gap) <= 1e-3
            # objectives never decrease along the trace
            objs = rep.objectives
            assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))


def test_exact_improvement_operator_invariance():
    # any strictly increasing operator picks the same actions, so the
    # whole policy trace must be identical across admissible families
    cmdp = random_tabular_cmdp(7, 3, 1, seed=6, gamma=0.9)
    rep_a = exact_improvement_report(cmdp, affine_family(0.0, 1.0))
    rep_l = exact_improvement_report(cmdp, log_family(0.0, 1.0))
    assert len(rep_a.policies) == len(rep_l.policies)
    for pa, pl in zip(rep_a.policies, rep_l.policies):
        assert np.array_equal(pa, pl)


def test_exact_improvement_negative_control():
    # a non-monotone operator must break value monotonicity; pinned
    # instance where the triangle map demonstrably does
    cmdp = random_tabular_cmdp(6, 3, 1, seed=0, gamma=0.9)
    rep = exact_improvement_report(cmdp, TRIANGLE, max_iters=30)
    assert rep.q_monotone_violation > 1e-6
    assert not rep.monotone()
