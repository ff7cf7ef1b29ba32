"""AWGN channel with an explicit SNR parametrization.

``SNR_dB = 10 log10(P / sigma^2)``. Real payloads (embeddings) receive real
noise of variance sigma^2; complex payloads (QAM symbols) receive circular
noise with sigma^2 / 2 per quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

INF_SNR = math.inf


class PowerConvention(str, Enum):
    FIXED_UNIT = "fixed_unit"
    EMPIRICAL = "empirical_per_transmission"


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    power_convention: PowerConvention = PowerConvention.FIXED_UNIT

    def __post_init__(self):
        object.__setattr__(self, "power_convention", PowerConvention(self.power_convention))
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"invalid snr_db {self.snr_db!r}")


def sigma_squared(snr_db: float, power: float = 1.0) -> float:
    if not power > 0:
        raise ValueError(f"signal power must be positive, got {power!r}")
    if snr_db == INF_SNR:
        return 0.0
    s2 = power / 10.0 ** (snr_db / 10.0)
    if not math.isfinite(s2) or s2 <= 0:
        raise ValueError(f"sigma^2 not finite and positive for snr_db={snr_db}, P={power}")
    return s2


def signal_power(z: np.ndarray) -> float:
    z = np.asarray(z)
    return float(np.mean(np.abs(z) ** 2))


def awgn(z: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise of total variance ``sigma2`` per element."""
    z = np.asarray(z)
    if sigma2 == 0.0:
        return z.copy()
    if np.iscomplexobj(z):
        s = math.sqrt(sigma2 / 2.0)
        noise = s * (rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape))
    else:
        noise = math.sqrt(sigma2) * rng.standard_normal(z.shape)
    return z + noise


def transmit(z, config: ChannelConfig, rng: np.random.Generator) -> np.ndarray:
    """Pass ``z`` (array, or anything with a ``values`` array) through the channel."""
    values = getattr(z, "values", z)
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise ValueError("transmit: payload contains non-finite values")
    if config.power_convention is PowerConvention.FIXED_UNIT:
        power = 1.0
    else:
        power = signal_power(values)
        if power == 0.0:
            raise ValueError("transmit: empirical power of an all-zero payload is undefined")
    return awgn(values, sigma_squared(config.snr_db, power), rng)


def measure_snr(z: np.ndarray, z_hat: np.ndarray) -> float:
    z, z_hat = np.asarray(z), np.asarray(z_hat)
    if z.shape != z_hat.shape:
        raise ValueError(f"measure_snr: shape mismatch {z.shape} vs {z_hat.shape}")
    noise = signal_power(z_hat - z)
    if noise == 0.0:
        raise ValueError("measure_snr: zero noise (infinite SNR)")
    return 10.0 * math.log10(signal_power(z) / noise)


def sample_snr_db(rng: np.random.Generator, low: float, high: float, size=None):
    """SNR drawn uniformly in dB over [low, high]."""
    if low == high:
        return np.full(size, float(low)) if size is not None else float(low)
    return rng.uniform(low, high, size=size)
