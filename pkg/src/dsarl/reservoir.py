"""Echo state network Q-approximator with a trainable linear readout.

The input and recurrent weights are drawn once and never change; only the
readout ``W_out`` of shape ``(n_actions, n_reservoir + n_input + 1)`` is
trained. Readout features are ``[x; u; 1]``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ReservoirConfig:
    n_reservoir: int = 64
    spectral_radius: float = 0.9
    input_scale: float = 1.0
    connectivity: float = 0.2
    leak_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_reservoir < 1:
            raise ValueError("n_reservoir must be >= 1")
        if not 0.0 < self.spectral_radius < 1.0:
            raise ValueError("spectral_radius must lie in (0, 1)")
        if self.input_scale <= 0:
            raise ValueError("input_scale must be positive")
        if not 0.0 < self.connectivity <= 1.0:
            raise ValueError("connectivity must lie in (0, 1]")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError("leak_rate must lie in (0, 1]")


@dataclass
class Reservoir:
    w_in: np.ndarray    # (n_reservoir, n_input + 1), last column is the bias
    w_rec: np.ndarray   # (n_reservoir, n_reservoir)
    leak_rate: float = 1.0

    @property
    def n_reservoir(self) -> int:
        return self.w_rec.shape[0]

    @property
    def n_input(self) -> int:
        return self.w_in.shape[1] - 1

    @property
    def n_features(self) -> int:
        return self.n_reservoir + self.n_input + 1

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_reservoir)

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.w_in).tobytes())
        h.update(np.ascontiguousarray(self.w_rec).tobytes())
        return h.hexdigest()


def spectral_radius(w: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(w))))


def init_reservoir(config: ReservoirConfig, n_input: int, max_retries: int = 10) -> Reservoir:
    rng = np.random.default_rng(config.seed)
    n = config.n_reservoir
    for _ in range(max_retries):
        w = rng.uniform(-1.0, 1.0, size=(n, n))
        w *= rng.random((n, n)) < config.connectivity
        rho = spectral_radius(w)
        if rho > 1e-8 and np.isfinite(rho):
            break
    else:
        raise RuntimeError(f"no usable recurrent matrix after {max_retries} draws "
                           f"(n={n}, connectivity={config.connectivity})")
    w_rec = w * (config.spectral_radius / rho)
    w_in = config.input_scale * rng.uniform(-1.0, 1.0, size=(n, n_input + 1))
    return Reservoir(w_in, w_rec, config.leak_rate)


def update_state(res: Reservoir, state: np.ndarray, u: np.ndarray) -> np.ndarray:
    drive = res.w_rec @ state + res.w_in[:, :-1] @ u + res.w_in[:, -1]
    return (1.0 - res.leak_rate) * state + res.leak_rate * np.tanh(drive)


def run_states(res: Reservoir, inputs: np.ndarray, state: np.ndarray | None = None) -> np.ndarray:
    """States after consuming each row of ``inputs``; shape ``(T, n_reservoir)``."""
    x = res.zero_state() if state is None else np.array(state, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    # input projections do not depend on the state, so do them in one product
    drives = inputs @ res.w_in[:, :-1].T + res.w_in[:, -1]
    out = np.empty((len(inputs), res.n_reservoir))
    leak, w = res.leak_rate, res.w_rec
    for t in range(len(inputs)):
        x = (1.0 - leak) * x + leak * np.tanh(w @ x + drives[t])
        out[t] = x
    return out


def features(states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Readout features ``[x; u; 1]`` for one or many time steps."""
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    one = np.ones(states.shape[:-1] + (1,))
    return np.concatenate([states, inputs, one], axis=-1)


def q_values(state: np.ndarray, u: np.ndarray, w_out: np.ndarray) -> np.ndarray:
    return features(state, u) @ np.asarray(w_out).T


def readout_loss(phi: np.ndarray, actions, targets, w_out: np.ndarray) -> float:
    """``0.5 * sum((target - Q(phi, a))^2)`` over the batch."""
    q = np.einsum("bf,bf->b", phi, w_out[np.asarray(actions)])
    return 0.5 * float(np.sum((np.asarray(targets) - q) ** 2))


def readout_gradient(phi: np.ndarray, actions, targets, w_out: np.ndarray) -> np.ndarray:
    """Gradient of :func:`readout_loss` with respect to ``w_out``."""
    actions = np.asarray(actions)
    q = np.einsum("bf,bf->b", phi, w_out[actions])
    delta = np.asarray(targets) - q
    grad = np.zeros_like(w_out)
    np.add.at(grad, actions, -delta[:, None] * phi)
    return grad


def train_readout(phi: np.ndarray, actions, targets, w_out: np.ndarray,
                  learning_rate: float = 0.01, mode: str = "sgd",
                  batch_size: int = 1) -> np.ndarray:
    """One pass of gradient descent on the readout; returns new weights.

    ``mode="sgd"`` walks the samples in order in chunks of ``batch_size``
    and steps along the chunk-mean gradient (``batch_size=1`` is plain
    per-sample LMS). ``mode="batch"`` takes one step on the summed loss.
    Only the rows of actions present in a chunk move.
    """
    if learning_rate < 0:
        raise ValueError("learning_rate must be non-negative")
    targets = np.asarray(targets, dtype=float)
    if not np.all(np.isfinite(targets)):
        raise FloatingPointError("non-finite TD target; check reward scale and discount")
    w = np.array(w_out, dtype=float)
    if mode == "batch":
        return w - learning_rate * readout_gradient(phi, actions, targets, w)
    if mode != "sgd":
        raise ValueError(f"unknown mode {mode!r}")
    phi = np.asarray(phi, dtype=float)
    actions = np.asarray(actions)
    if batch_size == 1:
        for f, a, y in zip(phi, actions.tolist(), targets.tolist()):
            row = w[a]
            row += learning_rate * (y - row @ f) * f
    else:
        for lo in range(0, len(actions), batch_size):
            sl = slice(lo, lo + batch_size)
            g = readout_gradient(phi[sl], actions[sl], targets[sl], w)
            w -= (learning_rate / len(actions[sl])) * g
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("readout diverged; reduce the learning rate")
    return w


def ridge_readout(phi: np.ndarray, actions, targets, w_out: np.ndarray,
                  regularization: float = 1e-2) -> np.ndarray:
    """Closed-form ridge refit of every action row that has samples."""
    actions = np.asarray(actions)
    targets = np.asarray(targets, dtype=float)
    w = np.array(w_out, dtype=float)
    eye = regularization * np.eye(phi.shape[1])
    for a in np.unique(actions):
        m = actions == a
        x = phi[m]
        w[a] = np.linalg.solve(x.T @ x + eye, x.T @ targets[m])
    return w
