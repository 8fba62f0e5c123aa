"""Small tanh MLP with hand-written backprop for the DQN+MLP baselines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple[int, ...]
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 3:
            raise ValueError("need an input, at least one hidden and an output layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ValueError("layer sizes must be positive")


@dataclass
class MlpWeights:
    weights: list[np.ndarray]   # weights[k] has shape (out_k, in_k)
    biases: list[np.ndarray]

    def copy(self) -> "MlpWeights":
        return MlpWeights([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)


def init_mlp(config: MlpConfig) -> MlpWeights:
    rng = np.random.default_rng(config.seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(config.layer_sizes[:-1], config.layer_sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(rng.uniform(-lim, lim, size=fan_out))
    return MlpWeights(ws, bs)


def _forward_trace(net: MlpWeights, x: np.ndarray):
    acts = [x]
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        acts.append(np.tanh(acts[-1] @ w.T + b))
    out = acts[-1] @ net.weights[-1].T + net.biases[-1]
    return acts, out


def forward(net: MlpWeights, x) -> np.ndarray:
    """Q-values for a single input ``(n_in,)`` or a batch ``(B, n_in)``."""
    return _forward_trace(net, np.asarray(x, dtype=float))[1]


def loss(net: MlpWeights, x, action: int, target: float) -> float:
    return 0.5 * (target - forward(net, x)[action]) ** 2


def gradients(net: MlpWeights, x, action: int, target: float):
    """Gradients of ``0.5 * (target - Q(x, action))^2`` for every layer."""
    acts, out = _forward_trace(net, np.asarray(x, dtype=float))
    d = np.zeros_like(out)
    d[action] = out[action] - target
    gw, gb = [], []
    for k in range(len(net.weights) - 1, -1, -1):
        gw.append(np.outer(d, acts[k]))
        gb.append(d)
        if k:
            d = (net.weights[k].T @ d) * (1.0 - acts[k] ** 2)
    return gw[::-1], gb[::-1]


def backward(net: MlpWeights, x, action: int, target: float, learning_rate: float = 0.01) -> MlpWeights:
    """One SGD step on a single (input, action, TD target) sample."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    gw, gb = gradients(net, x, action, target)
    if not all(np.all(np.isfinite(g)) for g in gw + gb):
        raise FloatingPointError("non-finite gradient; check reward scale and discount")
    return MlpWeights([w - learning_rate * g for w, g in zip(net.weights, gw)],
                      [b - learning_rate * g for b, g in zip(net.biases, gb)])


def batch_gradients(net: MlpWeights, xs, actions, targets):
    """Mean over the batch of the per-sample :func:`gradients`."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    acts, out = _forward_trace(net, xs)
    n = len(xs)
    rows = np.arange(n)
    d = np.zeros_like(out)
    d[rows, actions] = out[rows, actions] - np.asarray(targets, dtype=float)
    d /= n
    gw, gb = [], []
    for k in range(len(net.weights) - 1, -1, -1):
        gw.append(d.T @ acts[k])
        gb.append(d.sum(axis=0))
        if k:
            d = (d @ net.weights[k]) * (1.0 - acts[k] ** 2)
    return gw[::-1], gb[::-1]


def backward_batch(net: MlpWeights, xs, actions, targets, learning_rate: float = 0.01) -> MlpWeights:
    """One SGD step along the batch-mean gradient."""
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    gw, gb = batch_gradients(net, xs, actions, targets)
    if not all(np.all(np.isfinite(g)) for g in gw + gb):
        raise FloatingPointError("non-finite gradient; check reward scale and discount")
    return MlpWeights([w - learning_rate * g for w, g in zip(net.weights, gw)],
                      [b - learning_rate * g for b, g in zip(net.biases, gb)])
