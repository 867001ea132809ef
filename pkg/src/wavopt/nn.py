"""Minimal multilayer perceptrons with explicit forward/backward passes.

ReLU hidden layers, identity output layer, plain SGD.  Parameters are
plain numpy arrays; every routine is deterministic given its inputs (and
the seeded generator used at init).  The ReLU subgradient at zero is
taken to be zero.

The checkpoint format is a stable text layout (documented in
``write_params``) so trained parameters round-trip bit-exactly across
save/load.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MlpParams",
    "MlpGrads",
    "TrainingError",
    "init_mlp",
    "forward",
    "forward_batch",
    "forward_batch_cached",
    "backward",
    "backward_batch",
    "sgd_step",
    "AdamState",
    "zeros_like_grads",
    "write_params",
    "read_params",
    "lipschitz_bound",
]


class TrainingError(RuntimeError):
    """Raised when an update would propagate non-finite values."""


@dataclass(eq=False)
class MlpParams:
    """weights[l]: (fan_out, fan_in); biases[l]: (fan_out,)."""

    weights: list
    biases: list

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight/bias lists")
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("layer shape mismatch")
        for wa, wb in zip(self.weights[:-1], self.weights[1:]):
            if wb.shape[1] != wa.shape[0]:
                raise ValueError("consecutive layers do not compose")

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(eq=False)
class MlpGrads:
    d_weights: list
    d_biases: list

    def scaled(self, c: float) -> "MlpGrads":
        return MlpGrads([c * w for w in self.d_weights], [c * b for b in self.d_biases])

    def add_(self, other: "MlpGrads") -> "MlpGrads":
        for a, b in zip(self.d_weights, other.d_weights):
            a += b
        for a, b in zip(self.d_biases, other.d_biases):
            a += b
        return self

    def max_abs(self) -> float:
        vals = [np.max(np.abs(g)) if g.size else 0.0 for g in self.d_weights + self.d_biases]
        return float(max(vals))


def init_mlp(layer_sizes, rng) -> MlpParams:
    """Symmetric uniform init on (-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer."""
    sizes = list(layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError("layer_sizes needs at least input and output, all positive")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def zeros_like_grads(params: MlpParams) -> MlpGrads:
    return MlpGrads(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def forward_batch_cached(params: MlpParams, x: np.ndarray):
    """Batched forward pass returning (outputs, cache) for backprop.

    cache holds the layer inputs (post-activation of the previous layer)
    and the hidden pre-activations.
    """
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise ValueError("forward_batch expects a (batch, fan_in) array")
    if a.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"input width {a.shape[1]} != network fan-in {params.weights[0].shape[1]}"
        )
    inputs = [a]
    pre = []
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        if l < last:
            pre.append(z)
            a = np.maximum(z, 0.0)
            inputs.append(a)
        else:
            a = z
    return a, (inputs, pre)


def forward_batch(params: MlpParams, x: np.ndarray) -> np.ndarray:
    return forward_batch_cached(params, x)[0]


def forward(params: MlpParams, x) -> np.ndarray:
    """Single-sample forward pass: (fan_in,) -> (fan_out,)."""
    y = forward_batch(params, np.asarray(x, dtype=float)[None, :])
    return y[0]


def backward_batch(params: MlpParams, cache, upstream: np.ndarray, reduce: str = "mean"):
    """Backprop a batch of upstream output gradients through the network.

    Returns ``(grads, d_input)``: parameter gradients of
    sum_or_mean_b <upstream_b, f(x_b)> and the per-sample input gradient
    (batch, fan_in).  ``reduce`` is "mean" or "sum" over the batch; the
    input gradient is always per-sample.
    """
    inputs, pre = cache
    delta = np.asarray(upstream, dtype=float)
    if delta.shape[0] != inputs[0].shape[0]:
        raise ValueError("upstream batch size mismatch")
    if reduce not in ("mean", "sum"):
        raise ValueError("reduce must be 'mean' or 'sum'")
    scale = 1.0 / delta.shape[0] if reduce == "mean" else 1.0
    d_weights = [None] * params.n_layers
    d_biases = [None] * params.n_layers
    for l in range(params.n_layers - 1, -1, -1):
        d_weights[l] = scale * (delta.T @ inputs[l])
        d_biases[l] = scale * delta.sum(axis=0)
        delta = delta @ params.weights[l]
        if l > 0:
            delta = delta * (pre[l - 1] > 0.0)
    return MlpGrads(d_weights, d_biases), delta


def backward(params: MlpParams, x, upstream):
    """Single-sample gradients of <upstream, f(x)> w.r.t. parameters and input."""
    xb = np.asarray(x, dtype=float)[None, :]
    _, cache = forward_batch_cached(params, xb)
    grads, d_in = backward_batch(params, cache, np.asarray(upstream, dtype=float)[None, :], reduce="sum")
    return grads, d_in[0]


def sgd_step(params: MlpParams, grads: MlpGrads, learning_rate: float, sign: int = 1, in_place: bool = False) -> MlpParams:
    """params + sign * lr * grads (sign=+1 ascends, -1 descends).

    Raises ``TrainingError`` on non-finite gradients so the harness can
    surface diverging runs instead of writing NaN checkpoints.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    step = sign * learning_rate
    for g in grads.d_weights + grads.d_biases:
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient in sgd_step")
    if in_place:
        for w, gw in zip(params.weights, grads.d_weights):
            w += step * gw
        for b, gb in zip(params.biases, grads.d_biases):
            b += step * gb
        return params
    return MlpParams(
        [w + step * gw for w, gw in zip(params.weights, grads.d_weights)],
        [b + step * gb for b, gb in zip(params.biases, grads.d_biases)],
    )


class AdamState:
    """Per-parameter moment estimates for adaptive descent steps.

    One state object belongs to one parameter set; feeding it gradients
    for different shapes raises.  ``step`` always descends (callers that
    want ascent negate the gradient first).
    """

    def __init__(self, params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in params.weights]
        self.v_w = [np.zeros_like(w) for w in params.weights]
        self.m_b = [np.zeros_like(b) for b in params.biases]
        self.v_b = [np.zeros_like(b) for b in params.biases]

    def step(self, params: MlpParams, grads: MlpGrads, learning_rate: float) -> None:
        for g in grads.d_weights + grads.d_biases:
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient in adam step")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = learning_rate * math.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for w, g, m, v in zip(params.weights, grads.d_weights, self.m_w, self.v_w):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            w -= corr * m / (np.sqrt(v) + self.eps)
        for b, g, m, v in zip(params.biases, grads.d_biases, self.m_b, self.v_b):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            b -= corr * m / (np.sqrt(v) + self.eps)


def lipschitz_bound(params: MlpParams) -> float:
    """Product of spectral norms; an upper Lipschitz bound since ReLU is 1-Lipschitz."""
    out = 1.0
    for w in params.weights:
        out *= float(np.linalg.norm(w, 2))
    return out


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

_MAGIC = "mlp-text 1"


def write_params(stream, params: MlpParams) -> None:
    """Stable text serialization.

    Layout::

        mlp-text 1
        layers <L>
        sizes <s0> <s1> ... <sL>
        <then for each layer: weight rows in row-major order, one value
         per line, followed by the bias values>

    Values use repr-exact %.17g formatting, so a load reproduces the
    arrays bit for bit.
    """
    sizes = params.layer_sizes
    stream.write(_MAGIC + "\n")
    stream.write(f"layers {params.n_layers}\n")
    stream.write("sizes " + " ".join(str(s) for s in sizes) + "\n")
    for w, b in zip(params.weights, params.biases):
        for v in w.ravel(order="C"):
            stream.write(f"{v:.17g}\n")
        for v in b:
            stream.write(f"{v:.17g}\n")


def read_params(stream) -> MlpParams:
    header = stream.readline().strip()
    if header != _MAGIC:
        raise ValueError(f"bad checkpoint header {header!r}")
    n_layers = int(stream.readline().split()[1])
    sizes = [int(t) for t in stream.readline().split()[1:]]
    if len(sizes) != n_layers + 1:
        raise ValueError("checkpoint size list does not match layer count")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.empty(fan_out * fan_in)
        for i in range(w.size):
            w[i] = float(stream.readline())
        b = np.empty(fan_out)
        for i in range(fan_out):
            b[i] = float(stream.readline())
        weights.append(w.reshape(fan_out, fan_in))
        biases.append(b)
    return MlpParams(weights, biases)
