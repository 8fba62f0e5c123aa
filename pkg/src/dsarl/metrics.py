"""Per-iteration outcome rates and the CSV format.

CSV columns, in order:

    iteration, su, epsilon, success_rate, pu_collision_rate,
    su_collision_rate, idle_rate, mean_reward

One row per (iteration, SU) with ``su`` the 0-based SU index, followed by an
aggregate row with ``su = all`` holding the mean over SUs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dsarl.environment import Outcome

CSV_COLUMNS = ("iteration", "su", "epsilon", "success_rate", "pu_collision_rate",
               "su_collision_rate", "idle_rate", "mean_reward")
RATE_FIELDS = ("success_rate", "pu_collision_rate", "su_collision_rate", "idle_rate",
               "mean_reward")


@dataclass
class IterationMetrics:
    iteration: int
    epsilon: np.ndarray
    success_rate: np.ndarray
    pu_collision_rate: np.ndarray
    su_collision_rate: np.ndarray
    idle_rate: np.ndarray
    mean_reward: np.ndarray

    @property
    def n_sus(self) -> int:
        return len(self.success_rate)

    def aggregate(self, name: str) -> float:
        return float(np.mean(getattr(self, name)))

    def rows(self) -> list[list]:
        out = []
        for l in range(self.n_sus):
            out.append([self.iteration, l, float(self.epsilon[l])]
                       + [float(getattr(self, f)[l]) for f in RATE_FIELDS])
        out.append([self.iteration, "all", float(np.mean(self.epsilon))]
                   + [self.aggregate(f) for f in RATE_FIELDS])
        return out


def compute_metrics(labels, rewards, iteration: int = 0, epsilon=0.0) -> IterationMetrics:
    """Arithmetic means over the T slots of an iteration; inputs are ``(T, L)``."""
    labels = np.asarray(labels)
    rewards = np.asarray(rewards, dtype=float)
    if labels.ndim == 1:
        labels = labels[:, None]
        rewards = rewards.reshape(-1, 1)
    if labels.shape[0] == 0:
        raise ValueError("cannot compute metrics over zero slots")
    L = labels.shape[1]

    def rate(o):
        return (labels == o).mean(axis=0)

    return IterationMetrics(
        iteration=iteration,
        epsilon=np.broadcast_to(np.asarray(epsilon, dtype=float), (L,)).copy(),
        success_rate=rate(Outcome.SUCCESS),
        pu_collision_rate=rate(Outcome.COLLISION_PU),
        su_collision_rate=rate(Outcome.COLLISION_SU),
        idle_rate=rate(Outcome.IDLE),
        mean_reward=rewards.mean(axis=0),
    )


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def emit_csv(metrics: Iterable[IterationMetrics], path) -> Path:
    path = Path(path)
    try:
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for m in metrics:
                for row in m.rows():
                    w.writerow([_fmt(v) for v in row])
    except OSError as e:
        raise OSError(e.errno, f"cannot write metrics CSV {path}: {e.strerror}") from None
    return path


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def aggregate_series(rows: Sequence[dict], field: str) -> np.ndarray:
    """The ``su == all`` column ``field`` as an array indexed by iteration."""
    return np.array([float(r[field]) for r in rows if r["su"] == "all"])
