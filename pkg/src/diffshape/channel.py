"""Additive-noise channels calibrated by SNR.

Total complex noise power delta^2 is split evenly over I and Q, so each real
coordinate sees variance delta^2 / 2 whatever the noise family.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .constellation import ConstellationGeometry

SNR_CAP_DB = 60.0


class NoiseFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class ChannelSpec:
    family: NoiseFamily
    snr_db: float
    avg_power: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", NoiseFamily(self.family))
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not self.avg_power > 0:
            raise ValueError("avg_power must be positive")

    @property
    def noise_power(self) -> float:
        return snr_to_noise_power(self.snr_db, self.avg_power)


def snr_to_noise_power(snr_db: float, avg_power: float = 1.0) -> float:
    """delta^2 = P * 10^(-snr/10), with snr clamped at +60 dB."""
    if not avg_power > 0:
        raise ValueError("avg_power must be positive")
    return avg_power * 10.0 ** (-min(snr_db, SNR_CAP_DB) / 10.0)


def sample_noise(family: NoiseFamily | str, noise_power: float, shape, rng: np.random.Generator) -> np.ndarray:
    var = noise_power / 2.0
    family = NoiseFamily(family)
    if family is NoiseFamily.GAUSSIAN:
        return rng.normal(0.0, np.sqrt(var), size=shape)
    if family is NoiseFamily.LAPLACIAN:
        return rng.laplace(0.0, np.sqrt(var / 2.0), size=shape)
    # one-sided, not mean-centred
    return rng.exponential(np.sqrt(var), size=shape)


def apply_channel(x, spec: ChannelSpec, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite channel input")
    return x + sample_noise(spec.family, spec.noise_power, x.shape, rng)


def synthesize_noisy_symbols(geometry: ConstellationGeometry, snr_db: float, avg_power: float,
                             n_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly drawn constellation points and their Gaussian-noised copies."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    idx = rng.integers(0, geometry.order, size=n_samples)
    x = geometry.points[idx]
    delta = np.sqrt(snr_to_noise_power(snr_db, avg_power))
    y = x + delta / np.sqrt(2.0) * rng.standard_normal(x.shape)
    return x, y
