"""Small dense networks with explicit forward caches and analytic backprop.

Everything here operates on float64 numpy arrays. Networks accept a single
vector (D,) or a batch (N, D); gradients of a scalar loss are accumulated
over the batch.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch, StaleCache

ACTIVATIONS = ("relu", "identity", "sigmoid")

# Discriminator outputs are clamped into this range before any log.
SIGMOID_CLAMP = 1e-7


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z
    if name == "sigmoid":
        return _sigmoid(z)
    raise ValueError(f"unknown activation {name!r}")


def _activation_grad(name, z, out):
    # Derivative of the activation at pre-activation z (out = activation(z)).
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    if name == "sigmoid":
        return out * (1.0 - out)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (fan_out, fan_in)
    bias: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch(
                f"weights {self.weights.shape} incompatible with bias {self.bias.shape}"
            )


@dataclass
class ForwardCache:
    inputs: list  # per-layer input batches
    preacts: list  # per-layer pre-activations
    outputs: list  # per-layer post-activations
    single: bool  # input arrived as a 1-d vector


class Mlp:
    """Fully-connected network; layer dimensions must chain."""

    def __init__(self, layers):
        if not layers:
            raise ValueError("Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ShapeMismatch("consecutive layer dimensions do not chain")
        self.layers = list(layers)

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weights.shape[0]

    def parameters(self):
        """Live parameter arrays, flattened as [w0, b0, w1, b1, ...]."""
        params = []
        for layer in self.layers:
            params.append(layer.weights)
            params.append(layer.bias)
        return params

    def forward(self, x):
        """Run the network; returns (output, cache) with cache usable by backward."""
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        batch = np.atleast_2d(arr)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise DimensionMismatch(
                f"input shape {arr.shape} incompatible with input_dim {self.input_dim}"
            )
        inputs, preacts, outputs = [], [], []
        h = batch
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weights.T + layer.bias
            out = _activate(layer.activation, z)
            preacts.append(z)
            outputs.append(out)
            h = out
        cache = ForwardCache(inputs, preacts, outputs, single)
        return (h[0] if single else h), cache

    def backward(self, cache, upstream):
        """Backpropagate a scalar loss.

        `upstream` is dLoss/dOutput in the same shape the forward returned.
        Returns (param_grads, input_grad) with param_grads ordered like
        parameters().
        """
        if len(cache.preacts) != len(self.layers):
            raise StaleCache("cache layer count does not match network")
        g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        if g.shape != cache.preacts[-1].shape:
            raise StaleCache(
                f"upstream shape {g.shape} does not match cached output "
                f"{cache.preacts[-1].shape}"
            )
        param_grads = [None] * (2 * len(self.layers))
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            z = cache.preacts[idx]
            if z.shape[1] != layer.weights.shape[0]:
                raise StaleCache("cached shapes disagree with network parameters")
            g = g * _activation_grad(layer.activation, z, cache.outputs[idx])
            param_grads[2 * idx] = g.T @ cache.inputs[idx]
            param_grads[2 * idx + 1] = g.sum(axis=0)
            g = g @ layer.weights
        return param_grads, (g[0] if cache.single else g)


def init_mlp(dims, activations, rng):
    """He-style init for relu layers, 1/sqrt(fan_in) otherwise; zero biases."""
    if len(dims) != len(activations) + 1:
        raise ValueError("dims must have one more entry than activations")
    layers = []
    for fan_in, fan_out, act in zip(dims, dims[1:], activations):
        scale = math.sqrt(2.0 / fan_in) if act == "relu" else math.sqrt(1.0 / fan_in)
        w = rng.normal(0.0, scale, size=(fan_out, fan_in))
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers)


def make_encoder(input_dim, hidden_dim, feature_dim, rng):
    return init_mlp([input_dim, hidden_dim, feature_dim], ["relu", "identity"], rng)


def make_discriminator(feature_dim, hidden_dim, rng):
    return init_mlp([feature_dim, hidden_dim, 1], ["relu", "sigmoid"], rng)


def make_fc_head(feature_dim, n_classes, rng):
    # Single linear layer producing class logits; softmax is applied by callers.
    return init_mlp([feature_dim, n_classes], ["identity"], rng)


def grl_backward(upstream, lam):
    """Gradient-reversal backward pass: forward is identity, backward -lam*g."""
    lam = float(lam)
    if lam < 0.0:
        raise ValueError("gradient reversal coefficient must be >= 0")
    return -lam * np.asarray(upstream, dtype=np.float64)


def grl_schedule(progress, gamma=10.0):
    """Ramp 2/(1+exp(-gamma*p)) - 1 over training progress p in [0, 1]."""
    p = min(1.0, max(0.0, float(progress)))
    return 2.0 / (1.0 + math.exp(-gamma * p)) - 1.0


def _check_shapes(buffers, params, grads):
    if not (len(buffers) == len(params) == len(grads)):
        raise ShapeMismatch("parameter/gradient list lengths differ")
    for buf, p, g in zip(buffers, params, grads):
        if buf.shape != p.shape or p.shape != np.shape(g):
            raise ShapeMismatch(
                f"shape mismatch: buffer {buf.shape}, param {p.shape}, grad {np.shape(g)}"
            )


class SgdMomentum:
    """Classic momentum SGD with decoupled-from-nothing weight decay (adds wd*p to the gradient)."""

    kind = "sgd_momentum"

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0):
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.buffers = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, params, grads):
        _check_shapes(self.buffers, params, grads)
        self.steps += 1
        for p, g, buf in zip(params, grads, self.buffers):
            g = np.asarray(g, dtype=np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p
            buf *= self.momentum
            buf += g
            p -= self.lr * buf


class Adam:
    """Adam with bias correction; epsilon added outside the square root."""

    kind = "adam"

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.steps = 0

    def step(self, params, grads):
        _check_shapes(self.m, params, grads)
        self.steps += 1
        t = self.steps
        for i, (p, g) in enumerate(zip(params, grads)):
            g = np.asarray(g, dtype=np.float64)
            if self.weight_decay:
                g = g + self.weight_decay * p
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1**t)
            v_hat = self.v[i] / (1.0 - self.beta2**t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_scalar_step(value, grad, m, v, t, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update on a lone scalar; returns (value, m, v, t).

    Used for memory values, which are created and destroyed individually and
    therefore carry their own moment state and step counter.
    """
    t += 1
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return value - lr * m_hat / (math.sqrt(v_hat) + eps), m, v, t
