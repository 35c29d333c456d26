"""Minimal feed-forward network with hand-written reverse-mode gradients.

Every predictor in the package is an :class:`MlpModel`: affine layers with a
ReLU or tanh nonlinearity between them and a linear last layer (regression
outputs or classification logits).

Randomness: :func:`mlp_init` draws from ``numpy.random.default_rng(seed)``
(PCG64 seeded through ``SeedSequence``), consuming one ``uniform`` call per
layer, in layer order.
"""

from __future__ import annotations

import copy
import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._errors import NumericFailureError


class Activation(str, enum.Enum):
    RELU = "relu"
    TANH = "tanh"


@dataclass
class MlpModel:
    """Parameters of a fully connected network.

    ``weights[l]`` has shape ``(layer_dims[l + 1], layer_dims[l])`` and
    ``biases[l]`` has length ``layer_dims[l + 1]``. A model whose
    ``layer_dims`` has a single entry has no layers and is the identity map.
    """

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation = Activation.TANH

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.activation = Activation(self.activation)
        if len(self.layer_dims) < 1 or any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer_dims must be positive integers, got {self.layer_dims}")
        n_layers = len(self.layer_dims) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise ValueError("need one weight matrix and one bias vector per layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[layer + 1], self.layer_dims[layer])
            if w.shape != expected or b.shape != (expected[0],):
                raise ValueError(
                    f"layer {layer}: expected weight {expected} and bias ({expected[0]},), "
                    f"got {w.shape} and {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {layer} has non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order (w0, b0, w1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_parameters(self) -> np.ndarray:
        params = self.parameters()
        if not params:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in params])

    def with_flat_parameters(self, theta: np.ndarray) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_parameters,):
            raise ValueError(f"expected {self.n_parameters} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(theta[pos:pos + w.size].reshape(w.shape).copy())
            pos += w.size
            biases.append(theta[pos:pos + b.size].copy())
            pos += b.size
        return MlpModel(list(self.layer_dims), weights, biases, self.activation)

    def copy(self) -> "MlpModel":
        return copy.deepcopy(self)


@dataclass
class GradientSet:
    """Derivatives of a scalar objective, shaped like the model's parameters."""

    weights: list[np.ndarray]
    biases: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "GradientSet":
        return cls([np.zeros_like(w) for w in model.weights], [np.zeros_like(b) for b in model.biases])

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend((w.ravel(), b.ravel()))
        return np.concatenate(parts) if parts else np.zeros(0)

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet([factor * w for w in self.weights], [factor * b for b in self.biases])


def mlp_init(layer_dims, activation=Activation.TANH, seed: int = 0) -> MlpModel:
    """Random network: weights ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)), biases zero."""
    dims = list(layer_dims)
    if len(dims) < 2 or any(int(d) != d or d < 1 for d in dims):
        raise ValueError(f"layer_dims needs at least two positive integers, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, weights, biases, activation)


def _activate(z, activation):
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != model.input_dim:
        raise ValueError(f"expected inputs of dimension {model.input_dim}, got shape {x.shape}")
    return batch, single


def _forward_cache(model, batch):
    """Return the list of layer inputs and the list of pre-activations."""
    inputs, pre = [], []
    a = batch
    last = len(model.weights) - 1
    for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = a @ w.T + b
        pre.append(z)
        a = z if layer == last else _activate(z, model.activation)
    return inputs, pre, a


def mlp_forward(model: MlpModel, x) -> np.ndarray:
    """Raw network outputs for one input vector or a ``(n, d)`` batch."""
    batch, single = _as_batch(model, x)
    _, _, out = _forward_cache(model, batch)
    return out[0] if single else out


def mlp_backward(model: MlpModel, x, upstream) -> GradientSet:
    """Vector-Jacobian product ``d(sum upstream * output) / d params``.

    For a batch, ``upstream`` has shape ``(n, o)`` and the gradients are summed
    over the rows.
    """
    batch, single = _as_batch(model, x)
    upstream = np.asarray(upstream, dtype=np.float64)
    if single and upstream.ndim == 1:
        upstream = upstream[None, :]
    if upstream.shape != (batch.shape[0], model.output_dim):
        raise ValueError(f"upstream shape {upstream.shape} does not match outputs "
                         f"({batch.shape[0]}, {model.output_dim})")
    inputs, pre, _ = _forward_cache(model, batch)
    n_layers = len(model.weights)
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    delta = upstream
    for layer in range(n_layers - 1, -1, -1):
        grad_w[layer] = delta.T @ inputs[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = delta @ model.weights[layer]
            z = pre[layer - 1]
            if model.activation is Activation.RELU:
                delta = delta * (z > 0.0)
            else:
                delta = delta * (1.0 - np.tanh(z) ** 2)
    return GradientSet(grad_w, grad_b)


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    if np.any(np.isnan(z)):
        raise ValueError("softmax received NaN logits")
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _nudge_relu(model, batch, margin=1e-3, max_rounds=20):
    """Shift hidden biases so no pre-activation sits within ``margin`` of the kink."""
    model = model.copy()
    for layer in range(len(model.weights) - 1):
        for _ in range(max_rounds):
            _, pre, _ = _forward_cache(model, batch)
            close = np.any(np.abs(pre[layer]) < margin, axis=0)
            if not close.any():
                break
            model.biases[layer][close] += 2.0 * margin
    return model


def grad_check(model: MlpModel, scalar_objective: Callable, sample, step: float = 1e-4) -> float:
    """Max relative error between backprop and central finite differences.

    ``scalar_objective(outputs)`` must return ``(value, d value / d outputs)``
    for the model outputs on ``sample`` (a single input or a batch). The error
    per parameter is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    batch, single = _as_batch(model, sample)
    if model.activation is Activation.RELU:
        model = _nudge_relu(model, batch)

    def outputs_of(m):
        out = mlp_forward(m, batch)
        return out[0] if single else out

    value, upstream = scalar_objective(outputs_of(model))
    if not np.isfinite(value):
        raise NumericFailureError(f"objective is not finite: {value}")
    analytic = mlp_backward(model, batch, np.reshape(upstream, (batch.shape[0], -1))).flat()
    theta = model.flat_parameters()
    worst = 0.0
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] = theta[i] + step
        plus, _ = scalar_objective(outputs_of(model.with_flat_parameters(bumped)))
        bumped[i] = theta[i] - step
        minus, _ = scalar_objective(outputs_of(model.with_flat_parameters(bumped)))
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NumericFailureError(f"objective is not finite near parameter {i}")
        numeric = (plus - minus) / (2.0 * step)
        worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(numeric)))
    return worst


def reparametrize(model: MlpModel, rng=None) -> MlpModel:
    """A different parameter vector computing bit-identical outputs.

    Tanh hidden units get their sign flipped (tanh is odd); ReLU hidden units
    are rescaled by powers of two (ReLU is positively homogeneous, and
    power-of-two scaling is exact in floating point).
    """
    rng = np.random.default_rng(rng)
    out = model.copy()
    for layer in range(len(out.weights) - 1):
        width = out.layer_dims[layer + 1]
        if out.activation is Activation.TANH:
            factor = np.where(rng.random(width) < 0.5, -1.0, 1.0)
            factor[0] = -1.0
            back = factor
        else:
            factor = 2.0 ** rng.integers(1, 4, size=width)
            back = 1.0 / factor
        out.weights[layer] = out.weights[layer] * factor[:, None]
        out.biases[layer] = out.biases[layer] * factor
        out.weights[layer + 1] = out.weights[layer + 1] * back[None, :]
    return out
