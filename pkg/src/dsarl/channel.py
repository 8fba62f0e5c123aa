"""Radio propagation: WINNER II path loss, Rician fading, SINR and rate.

Powers are in mW and kept linear end to end; dB only appears at the
path-loss boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class PropagationParams:
    carrier_freq_ghz: float = 5.0
    pl_ref_db: float = 41.0
    pl_exponent: float = 22.7
    pl_freq_dep: float = 20.0
    k_factor: float = 8.0
    bandwidth_hz: float = 1e6
    noise_density_mw_per_hz: float = 10 ** -14.7
    sinr_gap: float = 1.0

    def __post_init__(self):
        if self.carrier_freq_ghz <= 0:
            raise ValueError("carrier_freq_ghz must be positive")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if self.noise_density_mw_per_hz <= 0:
            raise ValueError("noise_density_mw_per_hz must be positive")
        if self.k_factor < 0:
            raise ValueError("k_factor must be non-negative")
        if self.sinr_gap < 1:
            raise ValueError("sinr_gap must be >= 1")

    @property
    def noise_mw(self) -> float:
        return self.bandwidth_hz * self.noise_density_mw_per_hz


@dataclass
class FadingDraw:
    los: np.ndarray       # deterministic-amplitude component, random phase
    scatter: np.ndarray   # zero-mean circular Gaussian component

    @property
    def h(self) -> np.ndarray:
        return self.los + self.scatter

    @property
    def gain(self) -> np.ndarray:
        return np.abs(self.h) ** 2


def path_loss_db(distance_m, params: PropagationParams):
    """PL(d, f_c) = PL_ref + A*log10(d) + B*log10(f_c / 5)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"distance must be positive, got {distance_m!r}")
    pl = (params.pl_ref_db + params.pl_exponent * np.log10(d)
          + params.pl_freq_dep * math.log10(params.carrier_freq_ghz / 5.0))
    return float(pl) if pl.ndim == 0 else pl


def sigma_squared(distance_m, params: PropagationParams):
    """Mean channel power gain implied by the path loss (linear)."""
    return 10.0 ** (-np.asarray(path_loss_db(distance_m, params)) / 10.0)


def draw_rician(distance_m, params: PropagationParams, rng: np.random.Generator,
                size=None) -> FadingDraw:
    """Draw Rician coefficients h with E|h|^2 = sigma^2.

    The LOS phase is uniform on [0, 2*pi). ``size`` adds leading sample
    dimensions in front of the shape of ``distance_m``.
    """
    s2 = np.asarray(sigma_squared(distance_m, params))
    shape = s2.shape if size is None else tuple(np.atleast_1d(size)) + s2.shape
    k = params.k_factor
    sigma = np.sqrt(s2)
    theta = 2 * np.pi * rng.random(shape)
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(s2 / 2)
    # scatter is drawn even when unused so rng consumption does not depend on k
    los_w, nlos_w = (1.0, 0.0) if math.isinf(k) else (math.sqrt(k / (k + 1)), math.sqrt(1 / (k + 1)))
    return FadingDraw(los_w * sigma * np.exp(1j * theta), nlos_w * scatter)


def sinr(desired_power_mw: float, desired_gain: float,
         interferer_powers_mw: Sequence[float], interferer_gains: Sequence[float],
         params: PropagationParams) -> float:
    if len(interferer_powers_mw) != len(interferer_gains):
        raise ValueError(
            f"{len(interferer_powers_mw)} interferer powers but {len(interferer_gains)} gains")
    interference = math.fsum(p * g for p, g in zip(interferer_powers_mw, interferer_gains))
    return desired_power_mw * desired_gain / (interference + params.noise_mw)


def achievable_rate(sinr_linear, params: PropagationParams):
    """Normalised rate log2(1 + SINR / gap) in bit/s/Hz (bandwidth factor excluded)."""
    s = np.asarray(sinr_linear, dtype=float)
    if np.any(s < 0):
        raise ValueError(f"SINR must be non-negative, got {sinr_linear!r}")
    r = np.log2(1.0 + s / params.sinr_gap)
    return float(r) if r.ndim == 0 else r
