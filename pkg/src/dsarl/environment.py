"""Multi-agent DSA world: PU Markov chains, noisy sensing and reward resolution.

Channel states use ``ACTIVE = 0`` (PU transmitting) and ``INACTIVE = 1``.
Actions are integers in ``0..N``: 0 idles, ``n > 0`` accesses channel n.

Per slot t the order of events is: every SU senses the occupancy of slot t,
every SU acts, the occupancy moves on to slot t+1, and the reward is settled
against the occupancy that the transmission actually met. With the default
``reward_timing="next"`` that is the slot t+1 state, which is why the myopic
baseline weighs its belief by the transition probabilities.
``reward_timing="current"`` settles against the slot t state instead.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from dsarl.channel import PropagationParams, achievable_rate, draw_rician, sinr

ACTIVE = 0
INACTIVE = 1

# WINNER II is not meant for sub-metre links; coincident nodes are clamped.
MIN_LINK_DISTANCE_M = 1.0


class Outcome(IntEnum):
    SUCCESS = 0
    COLLISION_PU = 1
    COLLISION_SU = 2
    IDLE = 3


@dataclass(frozen=True)
class TransitionMatrix:
    """Two-state chain; ``pij`` is Pr{next = j | current = i}."""
    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        for name in ("p00", "p01", "p10", "p11"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        if not (math.isclose(self.p00 + self.p01, 1.0, abs_tol=1e-12)
                and math.isclose(self.p10 + self.p11, 1.0, abs_tol=1e-12)):
            raise ValueError(f"rows of {self} do not sum to 1")

    @classmethod
    def from_stay(cls, p11: float, p00: float) -> "TransitionMatrix":
        return cls(p00=p00, p01=1.0 - p00, p10=1.0 - p11, p11=p11)

    @property
    def stationary_inactive(self) -> float:
        denom = self.p01 + self.p10
        return 1.0 if denom == 0 else self.p01 / denom


@dataclass
class Geometry:
    su_tx: np.ndarray
    su_rx: np.ndarray
    pu_tx: np.ndarray
    pu_rx: np.ndarray

    def __post_init__(self):
        self.su_tx = np.asarray(self.su_tx, dtype=float).reshape(-1, 2)
        self.su_rx = np.asarray(self.su_rx, dtype=float).reshape(-1, 2)
        self.pu_tx = np.asarray(self.pu_tx, dtype=float).reshape(-1, 2)
        self.pu_rx = np.asarray(self.pu_rx, dtype=float).reshape(-1, 2)
        if len(self.su_tx) != len(self.su_rx) or len(self.pu_tx) != len(self.pu_rx):
            raise ValueError("every transmitter needs exactly one receiver")

    @property
    def n_sus(self) -> int:
        return len(self.su_tx)

    @property
    def n_pus(self) -> int:
        return len(self.pu_tx)

    def su_distances(self) -> np.ndarray:
        """``d[k, i]``: distance from SU transmitter k to SU receiver i."""
        diff = self.su_tx[:, None, :] - self.su_rx[None, :, :]
        return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), MIN_LINK_DISTANCE_M)

    def link_lengths(self) -> np.ndarray:
        return np.hypot(*(self.su_tx - self.su_rx).T)


@dataclass
class Scenario:
    """Everything random about a network that stays fixed for a run."""
    geometry: Geometry
    matrices: list[TransitionMatrix]
    errors: np.ndarray                      # (L, N) sensing error probabilities
    schedule: Optional[np.ndarray] = None   # (N, period) deterministic PU pattern
    seed: Optional[int] = None

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=float)
        check_error_profile(self.errors)
        if self.errors.shape != (self.n_sus, self.n_channels):
            raise ValueError(f"error profile shape {self.errors.shape} != "
                             f"({self.n_sus}, {self.n_channels})")
        if self.schedule is not None:
            self.schedule = np.asarray(self.schedule, dtype=np.int8).reshape(self.n_channels, -1)

    @property
    def n_channels(self) -> int:
        return len(self.matrices)

    @property
    def n_sus(self) -> int:
        return self.geometry.n_sus

    def to_dict(self) -> dict:
        g = self.geometry
        return {
            "seed": self.seed,
            "geometry": {k: getattr(g, k).tolist() for k in ("su_tx", "su_rx", "pu_tx", "pu_rx")},
            "matrices": [[m.p00, m.p01, m.p10, m.p11] for m in self.matrices],
            "errors": self.errors.tolist(),
            "schedule": None if self.schedule is None else self.schedule.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(geometry=Geometry(**d["geometry"]),
                   matrices=[TransitionMatrix(*row) for row in d["matrices"]],
                   errors=np.array(d["errors"], dtype=float),
                   schedule=None if d.get("schedule") is None else np.array(d["schedule"]),
                   seed=d.get("seed"))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def check_error_profile(errors) -> None:
    e = np.asarray(errors, dtype=float)
    if np.any(~np.isfinite(e)) or np.any(e < 0) or np.any(e > 0.5):
        raise ValueError("sensing error probabilities must lie in [0, 0.5]")


def _place_receiver(tx, dist_range, arena_m, rng, max_tries=10_000):
    lo, hi = dist_range
    for _ in range(max_tries):
        d = rng.uniform(lo, hi)
        phi = rng.uniform(0.0, 2 * np.pi)
        rx = tx + d * np.array([np.cos(phi), np.sin(phi)])
        if np.all(rx >= 0) and np.all(rx <= arena_m):
            return rx
    raise ValueError(f"cannot place a receiver {dist_range} m from {tx} inside the arena")


def generate_scenario(n_channels: int, n_sus: int, rng: np.random.Generator,
                      arena_m: float = 150.0, link_dist_range=(20.0, 40.0),
                      p11_range=(0.7, 1.0), p00_range=(0.0, 0.3),
                      error_profile=0.1, schedule=None, seed=None) -> Scenario:
    """Draw node positions, per-channel Markov chains and the sensing error profile.

    ``error_profile`` is either a scalar applied to every (SU, channel) pair
    or an ``(n_sus, n_channels)`` array.
    """
    lo, hi = link_dist_range
    if arena_m <= 0 or lo <= 0 or hi < lo:
        raise ValueError("arena and link distances must be positive with min <= max")
    if lo > arena_m * math.sqrt(2):
        raise ValueError(f"link distance {lo} m exceeds the arena diagonal")
    for name, (a, b) in (("p11_range", p11_range), ("p00_range", p00_range)):
        if not 0.0 <= a <= b <= 1.0:
            raise ValueError(f"{name}={[a, b]} is not a sub-interval of [0, 1]")

    pu_tx = rng.uniform(0, arena_m, size=(n_channels, 2))
    pu_rx = rng.uniform(0, arena_m, size=(n_channels, 2))
    su_tx = np.empty((n_sus, 2))
    su_rx = np.empty((n_sus, 2))
    for i in range(n_sus):
        # a transmitter too close to every edge can have no valid receiver
        for _ in range(1000):
            su_tx[i] = rng.uniform(0, arena_m, size=2)
            try:
                su_rx[i] = _place_receiver(su_tx[i], link_dist_range, arena_m, rng, max_tries=200)
                break
            except ValueError:
                continue
        else:
            raise ValueError(f"impossible geometry for link distances {link_dist_range}")
    p11 = rng.uniform(*p11_range, size=n_channels)
    p00 = rng.uniform(*p00_range, size=n_channels)
    matrices = [TransitionMatrix.from_stay(float(a), float(b)) for a, b in zip(p11, p00)]
    errors = np.broadcast_to(np.asarray(error_profile, dtype=float), (n_sus, n_channels)).copy()
    return Scenario(Geometry(su_tx, su_rx, pu_tx, pu_rx), matrices, errors,
                    schedule=schedule, seed=seed)


def _chain_arrays(matrices: Sequence[TransitionMatrix]):
    return (np.array([m.p11 for m in matrices]), np.array([m.p01 for m in matrices]))


def step_markov(occupancy, matrices: Sequence[TransitionMatrix], rng: np.random.Generator,
                _arrays=None) -> np.ndarray:
    occ = np.asarray(occupancy)
    if len(occ) != len(matrices):
        raise ValueError("occupancy and matrices differ in length")
    p11, p01 = _arrays if _arrays is not None else _chain_arrays(matrices)
    u = rng.random(len(occ))
    return np.where(occ == INACTIVE, u < p11, u < p01).astype(np.int8)


def step_deterministic(schedule, t: int) -> np.ndarray:
    if t < 0:
        raise ValueError("slot index must be non-negative")
    sched = np.asarray(schedule, dtype=np.int8)
    if sched.ndim == 1:
        sched = sched[None, :]
    return sched[:, t % sched.shape[1]].copy()


def sense(occupancy, errors, rng: np.random.Generator) -> np.ndarray:
    """Noisy observations of ``occupancy``; every bit flips with prob ``errors[l, n]``.

    ``occupancy`` is ``(N,)`` or ``(T, N)``; the result is ``(L, N)`` or ``(L, T, N)``.
    """
    occ = np.asarray(occupancy, dtype=np.int8)
    e = np.asarray(errors, dtype=float)
    e = e.reshape(-1, occ.shape[-1])
    shape = (e.shape[0],) + occ.shape
    e_b = e if occ.ndim == 1 else e[:, None, :]
    flip = rng.random(shape) < e_b
    return np.where(flip, 1 - occ, occ).astype(np.int8)


@dataclass
class SlotOutcomes:
    """Per (slot, SU) results; arrays are shaped ``(T, L)``."""
    rewards: np.ndarray
    labels: np.ndarray
    warnings: np.ndarray
    interference_mw: np.ndarray = field(repr=False)


def resolve_actions(occupancy, actions, gains, params: PropagationParams,
                    su_power_mw: float, penalty: float) -> SlotOutcomes:
    """Settle simultaneous SU actions into rewards and outcome labels.

    ``occupancy`` ``(T, N)`` is the state the transmissions meet, ``actions``
    is ``(T, L)`` and ``gains[t, k, i]`` is ``|h|^2`` from SU transmitter k to
    SU receiver i. A SU on an Active channel gets ``-penalty`` and a warning
    whatever else shares the channel; SUs sharing an Inactive channel
    interfere with each other.
    """
    occ = np.atleast_2d(np.asarray(occupancy))
    a = np.atleast_2d(np.asarray(actions))
    T, L = a.shape
    g = np.asarray(gains, dtype=float).reshape(T, L, L)
    if occ.shape[0] != T:
        raise ValueError(f"{occ.shape[0]} occupancy rows for {T} action rows")
    if np.any(a < 0) or np.any(a > occ.shape[1]):
        raise ValueError("action outside 0..N")

    tx = a > 0
    ch = np.where(tx, a - 1, 0)
    hit_pu = tx & (np.take_along_axis(occ, ch, axis=1) == ACTIVE)
    same = (a[:, :, None] == a[:, None, :]) & tx[:, :, None] & tx[:, None, :]
    idx = np.arange(L)
    same[:, idx, idx] = False
    interference = su_power_mw * np.einsum("tik,tki->ti", same, g)
    own = g[:, idx, idx]
    rate = np.log2(1.0 + su_power_mw * own / (interference + params.noise_mw) / params.sinr_gap)

    rewards = np.where(hit_pu, -penalty, np.where(tx, rate, 0.0))
    labels = np.full((T, L), Outcome.SUCCESS, dtype=np.int8)
    labels[same.any(axis=2)] = Outcome.COLLISION_SU
    labels[hit_pu] = Outcome.COLLISION_PU
    labels[~tx] = Outcome.IDLE
    return SlotOutcomes(rewards, labels, hit_pu.copy(), np.where(tx, interference, 0.0))


def resolve_slot(occupancy, actions, gains, params: PropagationParams,
                 su_power_mw: float, penalty: float):
    """Scalar per-slot version of :func:`resolve_actions`.

    Returns ``(rewards, labels)`` lists; used by the online training loop
    where a single slot is settled at a time.
    """
    L = len(actions)
    rewards = [0.0] * L
    labels = [Outcome.IDLE] * L
    for i, a in enumerate(actions):
        if a == 0:
            continue
        if occupancy[a - 1] == ACTIVE:
            rewards[i] = -penalty
            labels[i] = Outcome.COLLISION_PU
            continue
        others = [k for k in range(L) if k != i and actions[k] == a]
        s = sinr(su_power_mw, gains[i][i], [su_power_mw] * len(others),
                 [gains[k][i] for k in others], params)
        rewards[i] = achievable_rate(s, params)
        labels[i] = Outcome.COLLISION_SU if others else Outcome.SUCCESS
    return rewards, labels


def draw_link_gains(geometry: Geometry, params: PropagationParams,
                    rng: np.random.Generator, n_slots: int) -> np.ndarray:
    """Block-fading SU-to-SU power gains, shaped ``(n_slots, L, L)``.

    PU-to-SU links are not drawn: a SU on an Active channel is settled by
    the penalty, so PU interference never enters a rate.
    """
    return draw_rician(geometry.su_distances(), params, rng, size=n_slots).gain


@dataclass
class Rollout:
    """Observations and ground truth for T consecutive slots.

    ``occupancy`` and ``sensed`` carry T+1 entries (slot 0 is the state left
    by the previous rollout); ``reward_occupancy`` is what slot t's actions meet.
    """
    occupancy: np.ndarray        # (T+1, N)
    sensed: np.ndarray           # (L, T+1, N)
    gains: np.ndarray            # (T, L, L)
    reward_occupancy: np.ndarray  # (T, N)


class DsaEnvironment:
    """Single-writer simulator; one instance per run.

    Occupancy and sensing do not depend on the SUs' actions, so a whole
    iteration of observations is generated up front by :meth:`rollout`.
    """

    def __init__(self, scenario: Scenario, params: PropagationParams, *,
                 markov_rng: np.random.Generator, fading_rng: np.random.Generator,
                 sensing_rngs: Sequence[np.random.Generator],
                 su_power_mw: float = 20.0, pu_power_mw: float = 40.0, penalty: float = 2.0,
                 reward_timing: str = "next", fading: str = "iid"):
        if reward_timing not in ("next", "current"):
            raise ValueError(f"unknown reward_timing {reward_timing!r}")
        if fading not in ("iid", "static"):
            raise ValueError(f"unknown fading mode {fading!r}")
        if len(sensing_rngs) != scenario.n_sus:
            raise ValueError("one sensing stream per SU is required")
        self.scenario = scenario
        self.params = params
        self.su_power_mw = su_power_mw
        self.pu_power_mw = pu_power_mw
        self.penalty = penalty
        self.reward_timing = reward_timing
        self.fading = fading
        self._markov_rng = markov_rng
        self._fading_rng = fading_rng
        self._sensing_rngs = list(sensing_rngs)
        self._chains = _chain_arrays(scenario.matrices)
        self.t = 0
        self.occupancy = self._initial_occupancy()
        self.sensed = self._sense(self.occupancy[None, :])[:, 0, :]

    @property
    def n_channels(self) -> int:
        return self.scenario.n_channels

    @property
    def n_sus(self) -> int:
        return self.scenario.n_sus

    def _initial_occupancy(self) -> np.ndarray:
        if self.scenario.schedule is not None:
            return step_deterministic(self.scenario.schedule, 0)
        pi = np.array([m.stationary_inactive for m in self.scenario.matrices])
        return (self._markov_rng.random(self.n_channels) < pi).astype(np.int8)

    def _sense(self, occ: np.ndarray) -> np.ndarray:
        errors = self.scenario.errors
        return np.stack([sense(occ, errors[l], rng)[0]
                         for l, rng in enumerate(self._sensing_rngs)])

    def rollout(self, n_slots: int) -> Rollout:
        occ = np.empty((n_slots + 1, self.n_channels), dtype=np.int8)
        occ[0] = self.occupancy
        if self.scenario.schedule is not None:
            for k in range(1, n_slots + 1):
                occ[k] = step_deterministic(self.scenario.schedule, self.t + k)
        else:
            for k in range(1, n_slots + 1):
                occ[k] = step_markov(occ[k - 1], self.scenario.matrices, self._markov_rng,
                                     _arrays=self._chains)
        sensed = np.empty((self.n_sus, n_slots + 1, self.n_channels), dtype=np.int8)
        sensed[:, 0] = self.sensed
        sensed[:, 1:] = self._sense(occ[1:])
        if self.fading == "iid":
            gains = draw_link_gains(self.scenario.geometry, self.params, self._fading_rng, n_slots)
        else:
            once = draw_link_gains(self.scenario.geometry, self.params, self._fading_rng, 1)
            gains = np.repeat(once, n_slots, axis=0)
        self.t += n_slots
        self.occupancy = occ[-1].copy()
        self.sensed = sensed[:, -1].copy()
        reward_occ = occ[1:] if self.reward_timing == "next" else occ[:-1]
        return Rollout(occ, sensed, gains, reward_occ)

    def resolve(self, rollout: Rollout, actions) -> SlotOutcomes:
        return resolve_actions(rollout.reward_occupancy, actions, rollout.gains, self.params,
                               self.su_power_mw, self.penalty)
