"""Channel-access policies.

Learning agents only ever see their own sensed bits and their own rewards;
the myopic agent is the one policy handed the channel statistics.

Two driving styles exist. Batch agents (DQN, myopic, fixed rules) do not
change their policy inside an iteration, so they choose all T actions from
the iteration's observation sequence at once and learn afterwards. Online
agents (tabular Q-learning) act and update slot by slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from dsarl import neural
from dsarl import reservoir as rc
from dsarl.environment import INACTIVE, TransitionMatrix


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    decay: float = 0.995
    floor: float = 0.02

    def __post_init__(self):
        if not (0 <= self.floor <= 1 and 0 <= self.start <= 1 and 0 < self.decay <= 1):
            raise ValueError(f"invalid epsilon schedule {self}")

    def value(self, iteration: int) -> float:
        return max(self.floor, self.start * self.decay ** iteration)


@dataclass
class Experience:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    slot: int = 0


def epsilon_greedy(q, epsilon: float, rng: np.random.Generator):
    """Greedy action with prob 1-eps (ties uniform), uniform action otherwise.

    Accepts one Q vector or a ``(B, A)`` batch. The same number of draws is
    made whatever ``epsilon`` is, so streams stay aligned across settings.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    q2 = np.atleast_2d(q)
    b, n = q2.shape
    explore = rng.random(b) < epsilon
    random_a = rng.integers(0, n, size=b)
    tiebreak = rng.random((b, n))
    is_max = q2 == q2.max(axis=1, keepdims=True)
    greedy = np.argmax(np.where(is_max, tiebreak, -1.0), axis=1)
    out = np.where(explore, random_a, greedy)
    return int(out[0]) if single else out


def encode_bits(sensed) -> np.ndarray:
    """Map sensed bits {0, 1} to network inputs {-1, +1}."""
    return 2.0 * np.asarray(sensed, dtype=float) - 1.0


# -- tabular ----------------------------------------------------------------

class QTable:
    """Lazily allocated Q-table keyed by the sensed bit vector."""

    def __init__(self, n_actions: int):
        self.n_actions = n_actions
        self.entries: dict[int, np.ndarray] = {}

    @staticmethod
    def key(s) -> int:
        k = 0
        for i, bit in enumerate(np.asarray(s).tolist()):
            k |= int(bit) << i
        return k

    def row(self, s) -> np.ndarray:
        k = self.key(s)
        r = self.entries.get(k)
        if r is None:
            r = self.entries[k] = np.zeros(self.n_actions)
        return r

    def get(self, s, a: int) -> float:
        r = self.entries.get(self.key(s))
        return 0.0 if r is None else float(r[a])

    def max_value(self, s) -> float:
        r = self.entries.get(self.key(s))
        return 0.0 if r is None else float(r.max())

    def __len__(self):
        return len(self.entries)


def q_learning_update(table: QTable, e: Experience, alpha: float, gamma: float) -> QTable:
    """Q(s,a) += alpha * (r + gamma * max_a' Q(s', a') - Q(s, a)), in place."""
    target = e.r + gamma * table.max_value(e.s_next)
    row = table.row(e.s)
    row[e.a] += alpha * (target - row[e.a])
    return table


# -- myopic -----------------------------------------------------------------

def myopic_belief(s_n, e_n):
    """Probability that the channel is Inactive given the sensed bit."""
    s_n = np.asarray(s_n, dtype=float)
    g = s_n * (1.0 - e_n) + (1.0 - s_n) * e_n
    return float(g) if np.ndim(g) == 0 else g


def myopic_expected_reward(g_n, matrix: TransitionMatrix, rate_n: float, penalty: float):
    return (g_n * (matrix.p10 * -penalty + matrix.p11 * rate_n)
            + (1.0 - g_n) * (matrix.p00 * -penalty + matrix.p01 * rate_n))


def myopic_act(sensed, matrices: Sequence[TransitionMatrix], errors, rates, penalty: float,
               allow_idle: bool = True):
    """Channel with the highest expected immediate reward (lowest index on ties).

    ``sensed`` may be ``(N,)`` or ``(T, N)``. With ``allow_idle`` the SU
    idles when no channel has a positive expectation.
    """
    s = np.asarray(sensed, dtype=float)
    p = np.array([[m.p00, m.p01, m.p10, m.p11] for m in matrices]).T
    rates = np.broadcast_to(np.asarray(rates, dtype=float), (len(matrices),))
    g = s * (1.0 - np.asarray(errors)) + (1.0 - s) * np.asarray(errors)
    r = g * (p[2] * -penalty + p[3] * rates) + (1.0 - g) * (p[0] * -penalty + p[1] * rates)
    best = np.argmax(r, axis=-1)
    action = best + 1
    if allow_idle:
        action = np.where(np.max(r, axis=-1) > 0, action, 0)
    return int(action) if np.ndim(action) == 0 else action


# -- Q-approximators ----------------------------------------------------------

def _encode_matrix(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _decode_matrix(d: dict) -> np.ndarray:
    return np.array(d["data"], dtype=float).reshape(d["shape"])


class RcQNetwork:
    """Reservoir features with a linear readout; the reservoir is shared, never trained."""

    kind = "rc"

    def __init__(self, res: rc.Reservoir, n_actions: int, w_out: Optional[np.ndarray] = None,
                 fit: str = "sgd", ridge: float = 1e-2, batch_size: int = 1):
        self.reservoir = res
        self.w_out = np.zeros((n_actions, res.n_features)) if w_out is None else np.array(w_out)
        self.fit_mode = fit
        self.ridge = ridge
        self.batch_size = batch_size

    def prepare(self, sensed_seq: np.ndarray) -> np.ndarray:
        # state starts from zero at the beginning of every sequence
        u = encode_bits(sensed_seq)
        return rc.features(rc.run_states(self.reservoir, u), u)

    def q(self, feats: np.ndarray) -> np.ndarray:
        return feats @ self.w_out.T

    def fit(self, feats, actions, targets, learning_rate, rng=None):
        if self.fit_mode == "ridge":
            self.w_out = rc.ridge_readout(feats, actions, targets, self.w_out, self.ridge)
        else:
            self.w_out = rc.train_readout(feats, actions, targets, self.w_out, learning_rate,
                                          batch_size=self.batch_size)

    def copy(self) -> "RcQNetwork":
        return RcQNetwork(self.reservoir, self.w_out.shape[0], self.w_out.copy(),
                          self.fit_mode, self.ridge, self.batch_size)

    def state_dict(self) -> dict:
        return {"w_in": _encode_matrix(self.reservoir.w_in),
                "w_rec": _encode_matrix(self.reservoir.w_rec),
                "w_out": _encode_matrix(self.w_out),
                "leak_rate": self.reservoir.leak_rate}

    def load_state_dict(self, d: dict) -> None:
        self.reservoir = rc.Reservoir(_decode_matrix(d["w_in"]), _decode_matrix(d["w_rec"]),
                                      d["leak_rate"])
        self.w_out = _decode_matrix(d["w_out"])


class MlpQNetwork:
    """Feedforward Q-network on the current sensed vector only."""

    kind = "mlp"

    def __init__(self, net: neural.MlpWeights, shuffle: bool = True, batch_size: int = 1):
        self.net = net
        self.shuffle = shuffle
        self.batch_size = batch_size

    def prepare(self, sensed_seq: np.ndarray) -> np.ndarray:
        return encode_bits(sensed_seq)

    def q(self, feats: np.ndarray) -> np.ndarray:
        return neural.forward(self.net, feats)

    def fit(self, feats, actions, targets, learning_rate, rng=None):
        if not np.all(np.isfinite(targets)):
            raise FloatingPointError("non-finite TD target; check reward scale and discount")
        order = np.arange(len(actions))
        if self.shuffle and rng is not None:
            rng.shuffle(order)
        net = self.net
        if self.batch_size == 1:
            for i in order.tolist():
                net = neural.backward(net, feats[i], int(actions[i]), float(targets[i]),
                                      learning_rate)
        else:
            actions = np.asarray(actions)
            targets = np.asarray(targets, dtype=float)
            for lo in range(0, len(order), self.batch_size):
                idx = order[lo:lo + self.batch_size]
                net = neural.backward_batch(net, feats[idx], actions[idx], targets[idx],
                                            learning_rate)
        self.net = net

    def copy(self) -> "MlpQNetwork":
        return MlpQNetwork(self.net.copy(), self.shuffle, self.batch_size)

    def state_dict(self) -> dict:
        return {"weights": [_encode_matrix(w) for w in self.net.weights],
                "biases": [_encode_matrix(b) for b in self.net.biases]}

    def load_state_dict(self, d: dict) -> None:
        self.net = neural.MlpWeights([_decode_matrix(w) for w in d["weights"]],
                                     [_decode_matrix(b) for b in d["biases"]])


@dataclass
class DqnPair:
    evaluation: object
    target: object

    @classmethod
    def from_network(cls, net) -> "DqnPair":
        return cls(net, net.copy())

    def sync(self) -> None:
        self.target = self.evaluation.copy()


def dqn_targets(pair: DqnPair, next_feats: np.ndarray, rewards, gamma: float) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=float)
    if gamma == 0:
        return rewards.copy()
    return rewards + gamma * pair.target.q(next_feats).max(axis=1)


def train_on_sequence(pair: DqnPair, feats: np.ndarray, actions, rewards, gamma: float,
                      learning_rate: float, epochs: int = 1, rng=None) -> DqnPair:
    """Fit the evaluation network to one iteration of data, then sync the target.

    ``feats`` holds T+1 rows: the features of S(0..T). Targets are built
    from the target network once, before any update.
    """
    actions = np.asarray(actions)
    if len(feats) != len(actions) + 1 or len(rewards) != len(actions):
        raise ValueError("need T+1 feature rows for T actions and rewards")
    targets = dqn_targets(pair, feats[1:], rewards, gamma)
    for _ in range(epochs):
        pair.evaluation.fit(feats[:-1], actions, targets, learning_rate, rng)
    pair.sync()
    return pair


def dqn_train_iteration(pair: DqnPair, buffer: Sequence[Experience], gamma: float,
                        learning_rate: float, epochs: int = 1, rng=None) -> DqnPair:
    """Train on a complete, slot-ordered buffer of one iteration's experiences."""
    if not buffer:
        raise ValueError("empty experience buffer")
    for k, e in enumerate(buffer):
        if e.slot != k:
            raise ValueError(f"buffer slot {e.slot} at position {k}; buffer is incomplete")
        if k and not np.array_equal(buffer[k - 1].s_next, e.s):
            raise ValueError(f"experience {k} does not continue experience {k - 1}")
    seq = np.array([e.s for e in buffer] + [buffer[-1].s_next])
    feats = pair.evaluation.prepare(seq)
    return train_on_sequence(pair, feats, [e.a for e in buffer], [e.r for e in buffer],
                             gamma, learning_rate, epochs, rng)


# -- agents -----------------------------------------------------------------

class Agent:
    kind = "agent"
    online = False
    learns = False

    def act_iteration(self, sensed_seq: np.ndarray, epsilon: float, rng=None) -> np.ndarray:
        """Actions for slots 0..T-1 given the ``(T+1, N)`` observation sequence."""
        raise NotImplementedError

    def learn(self, sensed_seq: np.ndarray, actions, rewards) -> None:
        pass

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, d: dict) -> None:
        pass


class DqnAgent(Agent):
    learns = True

    def __init__(self, network, n_actions: int, rng: np.random.Generator, *, gamma: float = 0.9,
                 learning_rate: float = 0.01, epochs: int = 1, kind: str = "dqn",
                 fit_rng: Optional[np.random.Generator] = None):
        self.pair = DqnPair.from_network(network)
        self.n_actions = n_actions
        self.rng = rng
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.kind = kind
        self.fit_rng = fit_rng
        self._feats = None

    def act_iteration(self, sensed_seq, epsilon, rng=None):
        self._feats = self.pair.evaluation.prepare(sensed_seq)
        q = self.pair.evaluation.q(self._feats[:-1])
        return epsilon_greedy(q, epsilon, self.rng if rng is None else rng)

    def learn(self, sensed_seq, actions, rewards):
        feats = self._feats if self._feats is not None else self.pair.evaluation.prepare(sensed_seq)
        train_on_sequence(self.pair, feats, actions, rewards, self.gamma, self.learning_rate,
                          self.epochs, self.fit_rng)
        self._feats = None

    def state_dict(self):
        return self.pair.evaluation.state_dict()

    def load_state_dict(self, d):
        self.pair.evaluation.load_state_dict(d)
        self.pair.sync()


class QLearningAgent(Agent):
    online = True
    learns = True
    kind = "qlearning"

    def __init__(self, n_actions: int, rng: np.random.Generator, *, alpha: float = 0.01,
                 gamma: float = 0.9):
        if not 0 < alpha < 1 or not 0 <= gamma <= 1:
            raise ValueError("need 0 < alpha < 1 and 0 <= gamma <= 1")
        self.table = QTable(n_actions)
        self.rng = rng
        self.alpha = alpha
        self.gamma = gamma

    def begin_iteration(self, sensed_seq, epsilon: float, rng=None) -> None:
        """Index the iteration's observations and pre-draw its exploration noise.

        Draws happen in the same order as :func:`epsilon_greedy` on a
        ``(T, A)`` batch.
        """
        rng = self.rng if rng is None else rng
        seq = np.asarray(sensed_seq, dtype=np.int64)
        T, n = len(seq) - 1, self.table.n_actions
        self._keys = (seq @ (1 << np.arange(seq.shape[1], dtype=np.int64))).tolist()
        self._explore = (rng.random(T) < epsilon).tolist()
        self._random = rng.integers(0, n, size=T).tolist()
        self._tiebreak = rng.random((T, n))

    def act(self, t: int) -> int:
        if self._explore[t]:
            return self._random[t]
        row = self.table.entries.get(self._keys[t])
        if row is None:
            return int(np.argmax(self._tiebreak[t]))
        return int(np.argmax(np.where(row == row.max(), self._tiebreak[t], -1.0)))

    def update(self, t: int, a: int, r: float) -> None:
        entries = self.table.entries
        nxt = entries.get(self._keys[t + 1])
        target = r + self.gamma * (0.0 if nxt is None else float(nxt.max()))
        row = entries.get(self._keys[t])
        if row is None:
            row = entries[self._keys[t]] = np.zeros(self.table.n_actions)
        row[a] += self.alpha * (target - row[a])

    def state_dict(self):
        return {"n_actions": self.table.n_actions,
                "entries": {str(k): v.tolist() for k, v in sorted(self.table.entries.items())}}

    def load_state_dict(self, d):
        self.table = QTable(d["n_actions"])
        self.table.entries = {int(k): np.array(v, dtype=float) for k, v in d["entries"].items()}


class MyopicAgent(Agent):
    kind = "myopic"

    def __init__(self, matrices: Sequence[TransitionMatrix], errors, rate: float, penalty: float,
                 allow_idle: bool = True):
        self.matrices = list(matrices)
        self.errors = np.asarray(errors, dtype=float)
        self.rate = rate
        self.penalty = penalty
        self.allow_idle = allow_idle

    def act_iteration(self, sensed_seq, epsilon, rng=None):
        return myopic_act(sensed_seq[:-1], self.matrices, self.errors, self.rate, self.penalty,
                          self.allow_idle)


class FixedRuleAgent(Agent):
    """Non-learning reference policies.

    ``always_access`` transmits on ``channel`` every slot; ``sensed_inactive``
    takes the lowest-index channel sensed Inactive and idles otherwise.
    """

    def __init__(self, rule: str, channel: int = 1):
        if rule not in ("always_access", "sensed_inactive"):
            raise ValueError(f"unknown rule {rule!r}")
        self.rule = rule
        self.channel = channel
        self.kind = rule

    def act_iteration(self, sensed_seq, epsilon, rng=None):
        s = np.asarray(sensed_seq[:-1])
        if self.rule == "always_access":
            return np.full(len(s), self.channel, dtype=int)
        free = s == INACTIVE
        return np.where(free.any(axis=1), np.argmax(free, axis=1) + 1, 0)
