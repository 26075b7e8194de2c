"""Multilayer perceptron with sigmoid units, written out by hand.

Weight matrix ``W[l]`` has shape ``(n_out, n_in + 1)``; its last column is the
bias, i.e. each layer sees its input with a constant 1 appended.  The output
layer is either a single sigmoid unit (an utterance score in (0, 1)) or a
softmax over K units (a frame posteriorgram).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, DimensionError

SIGMOID = "sigmoid"
SOFTMAX = "softmax"


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid_grad(s):
    return s * (1.0 - s)


_derivative = {"sigmoid": _sigmoid_grad}


@contextlib.contextmanager
def broken_sigmoid_derivative():
    """Swap in a wrong sigmoid derivative; negative control for gradient checks."""
    _derivative["sigmoid"] = lambda s: s * (1.0 - s) * 1.01 + 1e-3
    try:
        yield
    finally:
        _derivative["sigmoid"] = _sigmoid_grad


@dataclass
class MlpParams:
    """Layer weights plus an optional fixed input standardisation.

    When ``input_shift``/``input_scale`` are set the first layer sees
    ``(input - shift) * scale``; both are constants, not trained.
    """

    weights: list
    output: str = SIGMOID
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        if not self.weights:
            raise DimensionError("an MLP needs at least one weight matrix")
        if (self.input_shift is None) != (self.input_scale is None):
            raise ConfigError("input_shift and input_scale must be given together")
        if self.input_shift is not None:
            n_in = self.weights[0].shape[1] - 1
            self.input_shift = np.asarray(self.input_shift, dtype=np.float64).reshape(n_in)
            self.input_scale = np.asarray(self.input_scale, dtype=np.float64).reshape(n_in)
        for l in range(1, len(self.weights)):
            if self.weights[l].shape[1] != self.weights[l - 1].shape[0] + 1:
                raise DimensionError(f"weight {l} does not chain onto weight {l - 1}")
        if self.output == SIGMOID and self.weights[-1].shape[0] != 1:
            raise DimensionError("a sigmoid-output MLP must end in a single unit")
        if self.output not in (SIGMOID, SOFTMAX):
            raise ConfigError(f"unknown output kind {self.output!r}")
        if not all(np.all(np.isfinite(w)) for w in self.weights):
            raise DimensionError("weights contain non-finite values")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1] - 1] + [w.shape[0] for w in self.weights]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    @property
    def normalized(self) -> bool:
        return self.input_shift is not None

    def copy(self) -> "MlpParams":
        shift = None if self.input_shift is None else self.input_shift.copy()
        scale = None if self.input_scale is None else self.input_scale.copy()
        return MlpParams([w.copy() for w in self.weights], self.output, shift, scale)

    def with_standardization(self, samples) -> "MlpParams":
        """Copy whose input is standardised with the mean/std of ``samples`` (rows)."""
        samples = np.asarray(samples, dtype=np.float64)
        std = samples.std(axis=0)
        std[std <= 1e-12] = 1.0
        p = self.copy()
        p.input_shift = samples.mean(axis=0)
        p.input_scale = 1.0 / std
        return p

    def zeros_like(self) -> list:
        return [np.zeros_like(w) for w in self.weights]


@dataclass
class ForwardTrace:
    activations: list  # input followed by each hidden layer's output, all 2-d
    output: np.ndarray  # (n,) for sigmoid, (n, K) for softmax
    batched: bool = field(default=True)


@dataclass
class SgdConfig:
    learning_rate: float = 4e-6
    momentum: float = 0.9
    halving_threshold: float = 1e-3
    l2_weight: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.l2_weight < 0:
            raise ConfigError("l2_weight must be non-negative")


def init_weights(layer_sizes, seed: int, output: str = SIGMOID) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = np.zeros((fan_out, fan_in + 1))
        w[:, :-1] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        weights.append(w)
    return MlpParams(weights, output)


def mlp_forward(inp, params: MlpParams):
    """Forward pass; returns ``(output, trace)``.

    ``inp`` may be one vector or an ``(n, d)`` batch; the output then is a
    float (or a K-vector) for a single input and an array for a batch.
    """
    x = np.asarray(inp, dtype=np.float64)
    batched = x.ndim == 2
    X = x if batched else x[None, :]
    if X.ndim != 2 or X.shape[1] != params.layer_sizes[0]:
        raise DimensionError(f"input width {X.shape[-1]} does not match layer size {params.layer_sizes[0]}")
    if params.input_shift is not None:
        X = (X - params.input_shift) * params.input_scale
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for l, W in enumerate(params.weights):
        z = h @ W[:, :-1].T + W[:, -1]
        if l < last:
            h = sigmoid(z)
            acts.append(h)
        elif params.output == SIGMOID:
            out = sigmoid(z[:, 0])
        else:
            out = softmax(z)
    trace = ForwardTrace(acts, out, batched)
    if batched:
        return out, trace
    return (float(out[0]) if params.output == SIGMOID else out[0]), trace


def mlp_backward(trace: ForwardTrace, params: MlpParams, upstream, wrt_logits: bool = False):
    """Gradients of ``sum(upstream * output)`` w.r.t. the weights and the input.

    ``upstream`` has the output's shape.  With ``wrt_logits=True`` it is taken
    as the gradient on the final pre-activation instead (used for softmax
    cross-entropy, where that gradient is simply ``p - target``).
    Returns ``(weight_grads, input_grad)``; the input gradient is 1-d when
    the forward pass was unbatched.
    """
    if len(trace.activations) != len(params.weights) or trace.activations[0].shape[1] != params.layer_sizes[0]:
        raise DimensionError("trace does not belong to these parameters")
    n = trace.activations[0].shape[0]
    g = np.asarray(upstream, dtype=np.float64)
    dsig = _derivative["sigmoid"]
    if params.output == SIGMOID:
        g = np.broadcast_to(g.reshape(-1), (n,))
        dz = (g if wrt_logits else g * dsig(trace.output))[:, None]
    else:
        g = g.reshape(n, -1)
        if wrt_logits:
            dz = g
        else:
            p = trace.output
            dz = p * (g - (g * p).sum(axis=1, keepdims=True))
    grads = [None] * len(params.weights)
    for l in range(len(params.weights) - 1, -1, -1):
        W = params.weights[l]
        h = trace.activations[l]
        gw = np.empty_like(W)
        gw[:, :-1] = dz.T @ h
        gw[:, -1] = dz.sum(axis=0)
        grads[l] = gw
        dh = dz @ W[:, :-1]
        if l > 0:
            dz = dh * dsig(h)
    if params.input_scale is not None:
        dh = dh * params.input_scale
    return grads, (dh if trace.batched else dh[0])


def sgd_momentum_step(params: MlpParams, grads, velocity, config: SgdConfig, learning_rate: float | None = None):
    """One momentum step, in place: ``v = mu*v - lr*(g + l2*w); w += v``.

    Returns ``(params, velocity)``.
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    if len(grads) != len(params.weights) or len(velocity) != len(params.weights):
        raise DimensionError("gradient/velocity list does not match the weights")
    for w, g, v in zip(params.weights, grads, velocity):
        if g.shape != w.shape or v.shape != w.shape:
            raise DimensionError(f"shape mismatch {g.shape} / {v.shape} vs {w.shape}")
        v *= config.momentum
        v -= lr * (g + config.l2_weight * w)
        w += v
    return params, velocity


def halve_if_stalled(prev_loss: float | None, loss: float, lr: float, threshold: float) -> float:
    """Halve the learning rate when the relative loss improvement drops below ``threshold``."""
    if prev_loss is None or not np.isfinite(prev_loss):
        return lr
    improvement = (prev_loss - loss) / max(abs(prev_loss), 1e-12)
    return lr / 2.0 if improvement < threshold else lr


# --- finite-difference checking --------------------------------------------


def numerical_gradient(f, array: np.ndarray, eps: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``array`` (perturbed in place)."""
    grad = np.zeros_like(array)
    indices = np.ndindex(array.shape) if index is None else index
    for idx in indices:
        old = array[idx]
        array[idx] = old + eps
        fp = f()
        array[idx] = old - eps
        fm = f()
        array[idx] = old
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
