"""Dense networks with explicit per-layer caches for reverse mode."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "leaky_relu", "tanh", "linear", "sigmoid")
LEAK = 0.01


class NumericalError(FloatingPointError):
    """A NaN or Inf showed up in parameters, activations or gradients."""


def check_finite(arr, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {where}")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _act(x, tag):
    if tag == "relu":
        return np.maximum(x, 0.0)
    if tag == "leaky_relu":
        return np.where(x > 0, x, LEAK * x)
    if tag == "tanh":
        return np.tanh(x)
    if tag == "sigmoid":
        return sigmoid(x)
    return x


def _act_grad(pre, out, tag):
    if tag == "relu":
        return (pre > 0).astype(pre.dtype)
    if tag == "leaky_relu":
        return np.where(pre > 0, 1.0, LEAK)
    if tag == "tanh":
        return 1.0 - out * out
    if tag == "sigmoid":
        return out * (1.0 - out)
    return np.ones_like(pre)


@dataclass
class DenseNet:
    """Stack of affine layers; ``weights[i]`` has shape (fan_in, fan_out)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must align")
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
            if b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bias shape {b.shape} != ({w.shape[1]},)")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i}: input dim does not chain")

    @classmethod
    def build(cls, sizes, activations, rng) -> "DenseNet":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        if isinstance(activations, str):
            activations = [activations] * (len(sizes) - 1)
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, list(activations))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        list(self.activations))

    def load_params(self, params) -> None:
        for i in range(len(self.weights)):
            self.weights[i][...] = params[2 * i]
            self.biases[i][...] = params[2 * i + 1]


@dataclass
class Cache:
    net_id: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    out: list = field(default_factory=list)
    masks: list = field(default_factory=list)


def forward(net: DenseNet, x, train: bool = False, dropout: float = 0.0, rng=None):
    """Returns (y, cache). Inverted dropout on hidden outputs, training mode only."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.input_dim:
        raise ValueError(f"input has {x.shape[1]} features, net expects {net.input_dim}")
    use_dropout = train and dropout > 0
    if use_dropout and rng is None:
        raise ValueError("dropout in training mode needs an rng")
    cache = Cache(id(net))
    h = x
    last = len(net.weights) - 1
    for i, (w, b, tag) in enumerate(zip(net.weights, net.biases, net.activations)):
        cache.inputs.append(h)
        z = h @ w + b
        a = _act(z, tag)
        cache.pre.append(z)
        cache.out.append(a)
        mask = None
        if use_dropout and i < last:
            mask = (rng.random(a.shape) >= dropout) / (1.0 - dropout)
            a = a * mask
        cache.masks.append(mask)
        h = a
    check_finite(h, "network output")
    return h, cache


def backward(net: DenseNet, cache: Cache, dy):
    """Gradients (list aligned with ``net.params()``) and d(loss)/d(input)."""
    if cache.net_id != id(net) or len(cache.inputs) != len(net.weights):
        raise ValueError("cache does not belong to this network")
    grads = [None] * (2 * len(net.weights))
    g = np.asarray(dy, dtype=float)
    for i in reversed(range(len(net.weights))):
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        g = g * _act_grad(cache.pre[i], cache.out[i], net.activations[i])
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    for k, gr in enumerate(grads):
        check_finite(gr, f"gradient {k}")
    return grads, g


def mse(pred, target):
    """Mean over every element; returns (loss, d loss / d pred)."""
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def huber(pred, target, delta: float = 1.0):
    diff = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    a = np.abs(diff)
    loss = np.where(a <= delta, 0.5 * diff ** 2, delta * (a - 0.5 * delta))
    grad = np.clip(diff, -delta, delta)
    return float(np.mean(loss)), grad / diff.size


def reparameterize(mu, logvar, rng):
    """z = mu + exp(logvar / 2) * eps; also returns eps for the backward pass."""
    eps = rng.standard_normal(np.shape(mu))
    return mu + np.exp(0.5 * logvar) * eps, eps


def reparameterize_backward(dz, logvar, eps):
    return dz, dz * 0.5 * np.exp(0.5 * logvar) * eps


def kl_gaussian(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims, averaged over the batch."""
    mu = np.atleast_2d(mu)
    logvar = np.atleast_2d(logvar)
    per = -0.5 * np.sum(1.0 + logvar - mu ** 2 - np.exp(logvar), axis=1)
    return float(per.mean())


def kl_gaussian_grad(mu, logvar):
    mu = np.atleast_2d(mu)
    logvar = np.atleast_2d(logvar)
    n = mu.shape[0]
    return mu / n, 0.5 * (np.exp(logvar) - 1.0) / n


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    eps: float = 1e-8
    step: int = 0
    m: list = None
    v: list = None

    def step_update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """In-place bias-corrected Adam; decoupled decay subtracts lr * wd * param."""
        if len(params) != len(grads):
            raise ValueError("params and grads must align")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        for k, g in enumerate(grads):
            if g.shape != params[k].shape:
                raise ValueError(f"gradient {k} shape {g.shape} != {params[k].shape}")
            check_finite(g, f"gradient {k}")
        self.step += 1
        c1 = 1.0 - self.beta1 ** self.step
        c2 = 1.0 - self.beta2 ** self.step
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * p
            p -= update
            check_finite(p, "parameters after update")


def adam_step(state: AdamState, params, grads):
    state.step_update(params, grads)
    return params
