"""Explicit-backprop MLP: gradients vs. central differences, determinism."""

import io
import math

import numpy as np
import numpy.testing as npt
import pytest

from wavopt.nn import (
    MlpGrads,
    TrainingError,
    backward,
    backward_batch,
    forward,
    forward_batch,
    forward_batch_cached,
    init_mlp,
    lipschitz_bound,
    read_params,
    sgd_step,
    write_params,
)

EPS = 1e-5


def _flatten(params):
    return np.concatenate([a.ravel() for a in params.weights + params.biases])


def _unflatten_into(params, vec):
    i = 0
    for arr in params.weights + params.biases:
        arr[...] = vec[i : i + arr.size].reshape(arr.shape)
        i += arr.size


def _grad_vec(grads):
    return np.concatenate([a.ravel() for a in grads.d_weights + grads.d_biases])


def _min_preactivation_margin(params, x):
    _, (inputs, pre) = forward_batch_cached(params, np.atleast_2d(x))
    if not pre:
        return math.inf
    return min(float(np.min(np.abs(z))) for z in pre)


def _safe_instance(seed, sizes):
    # resample until every hidden pre-activation is safely away from the
    # ReLU kink, so +-EPS probes never flip an activation pattern
    for s in range(seed, seed + 50):
        rng = np.random.default_rng(s)
        params = init_mlp(sizes, rng)
        x = rng.standard_normal(sizes[0])
        u = rng.standard_normal(sizes[-1])
        if _min_preactivation_margin(params, x) > 1e-3:
            return params, x, u
    raise AssertionError("could not find a kink-free instance")


def _relative_gap(a, b):
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


class TestGradients:
    def test_backward_matches_central_differences(self):
        worst = 0.0
        for seed in range(20):
            params, x, u = _safe_instance(100 + seed, [4, 8, 8, 3])
            grads, _ = backward(params, x, u)
            theta = _flatten(params)
            fd = np.empty_like(theta)
            probe = params.copy()
            for i in range(theta.size):
                for s, out in ((EPS, 0), (-EPS, 1)):
                    t = theta.copy()
                    t[i] += s
                    _unflatten_into(probe, t)
                    y = forward(probe, x) @ u
                    if out == 0:
                        hi = y
                    else:
                        lo = y
                fd[i] = (hi - lo) / (2 * EPS)
            worst = max(worst, _relative_gap(_grad_vec(grads), fd))
        assert worst < 1e-5

    def test_input_gradient_matches_central_differences(self):
        params, x, u = _safe_instance(300, [5, 9, 2])
        _, d_in = backward(params, x, u)
        fd = np.empty_like(x)
        for i in range(x.size):
            xp, xm = x.copy(), x.copy()
            xp[i] += EPS
            xm[i] -= EPS
            fd[i] = (forward(params, xp) @ u - forward(params, xm) @ u) / (2 * EPS)
        assert _relative_gap(d_in, fd) < 1e-5

    def test_batch_mean_reduction_matches_sample_average(self):
        rng = np.random.default_rng(7)
        params = init_mlp([3, 6, 2], rng)
        xs = rng.standard_normal((4, 3))
        us = rng.standard_normal((4, 2))
        _, cache = forward_batch_cached(params, xs)
        batch_grads, _ = backward_batch(params, cache, us, reduce="mean")
        acc = None
        for x, u in zip(xs, us):
            g, _ = backward(params, x, u)
            acc = g if acc is None else acc.add_(g)
        avg = acc.scaled(1.0 / 4.0)
        for a, b in zip(batch_grads.d_weights, avg.d_weights):
            npt.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_relu_subgradient_at_zero_is_zero(self):
        # a unit that is exactly at the kink contributes no gradient
        params = init_mlp([1, 1, 1], 0)
        params.weights[0][...] = 1.0
        params.biases[0][...] = 0.0
        params.weights[1][...] = 1.0
        params.biases[1][...] = 0.0
        grads, d_in = backward(params, np.array([0.0]), np.array([1.0]))
        assert d_in[0] == 0.0
        assert grads.d_weights[0][0, 0] == 0.0


class TestDeterminismAndUpdates:
    def test_init_bitwise_deterministic(self):
        a = init_mlp([4, 7, 2], 42)
        b = init_mlp([4, 7, 2], 42)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)

    def test_init_bounds_scale_with_fan_in(self):
        params = init_mlp([16, 8, 4], 1)
        assert np.max(np.abs(params.weights[0])) <= 1.0 / 4.0
        assert np.max(np.abs(params.weights[1])) <= 1.0 / math.sqrt(8)

    def test_sgd_step_signs(self):
        params = init_mlp([2, 3, 1], 3)
        grads, _ = backward(params, np.array([0.3, -0.2]), np.array([1.0]))
        up = sgd_step(params, grads, 0.1, sign=1)
        down = sgd_step(params, grads, 0.1, sign=-1)
        delta_up = up.weights[0] - params.weights[0]
        delta_down = down.weights[0] - params.weights[0]
        npt.assert_allclose(delta_up, -delta_down, atol=1e-16)
        npt.assert_allclose(delta_up, 0.1 * grads.d_weights[0], atol=1e-16)

    def test_sgd_step_rejects_non_finite(self):
        params = init_mlp([2, 2, 1], 4)
        grads = MlpGrads(
            [np.full_like(w, np.nan) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
        )
        with pytest.raises(TrainingError):
            sgd_step(params, grads, 0.01)

    def test_lipschitz_bound_holds(self):
        rng = np.random.default_rng(9)
        params = init_mlp([3, 10, 10, 2], rng)
        bound = lipschitz_bound(params)
        for _ in range(200):
            x, y = rng.standard_normal((2, 3))
            fx, fy = forward(params, x), forward(params, y)
            lhs = np.linalg.norm(fx - fy)
            assert lhs <= bound * np.linalg.norm(x - y) + 1e-12

    def test_forward_batch_matches_single(self):
        rng = np.random.default_rng(10)
        params = init_mlp([4, 5, 3], rng)
        xs = rng.standard_normal((6, 4))
        batch = forward_batch(params, xs)
        for i in range(6):
            npt.assert_allclose(batch[i], forward(params, xs[i]), atol=1e-15)


class TestCheckpoint:
    def test_round_trip_bit_exact(self):
        params = init_mlp([5, 13, 13, 4], 2024)
        buf = io.StringIO()
        write_params(buf, params)
        buf.seek(0)
        loaded = read_params(buf)
        assert loaded.layer_sizes == params.layer_sizes
        for a, b in zip(params.weights + params.biases, loaded.weights + loaded.biases):
            assert np.array_equal(a, b)

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            read_params(io.StringIO("something else\n"))
