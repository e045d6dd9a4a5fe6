"""Transmitter-side shaping, receiver-side reconstruction and one end-to-end round."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec, apply_channel, synthesize_noisy_symbols
from .constellation import (ConstellationGeometry, ShapingDistribution, count_occurrences,
                            empirical_distribution, project, sample_symbols)
from .diffusion import DiffusionSchedule, reverse_sample, snr_matched_step
from .nn import DenoiserModel


@dataclass(frozen=True)
class SamplerOptions:
    """How the reverse chain is run at transmitter and receiver.

    ``stochastic`` keeps the sqrt(1 - a_t) z injection of the ancestral sampler.
    ``entry="snr_matched"`` starts at the step whose noise level matches the
    channel SNR, with the input scaled by sqrt(ab_t); ``entry="full"`` feeds the
    received samples in unscaled at step T. The defaults (mean chain, matched
    entry) decide far better than ancestral sampling from T at every SNR tried.
    """

    stochastic: bool = False
    entry: str = "snr_matched"

    def __post_init__(self):
        if self.entry not in ("full", "snr_matched"):
            raise ValueError(f"unknown entry mode {self.entry!r}")


DEFAULT_SAMPLER = SamplerOptions()


def denoise(y, model, schedule: DiffusionSchedule, rng: np.random.Generator, snr_db: float | None,
            options: SamplerOptions = DEFAULT_SAMPLER, avg_power: float = 1.0) -> np.ndarray:
    """Reverse chain from noisy samples; without an SNR the chain enters at T."""
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if options.entry == "full" or snr_db is None:
        return reverse_sample(y, model, schedule, rng, stochastic=options.stochastic)
    start = snr_matched_step(schedule, snr_db, avg_power)
    x = np.sqrt(schedule.alpha_bar[start - 1]) * y
    return reverse_sample(x, model, schedule, rng, stochastic=options.stochastic, start_step=start)


@dataclass
class ShapingResult:
    distribution: ShapingDistribution
    raw_outputs: np.ndarray  # denoised points before projection
    symbols: np.ndarray  # projected indices (psi)
    snr_db: float
    untrained: bool = False


@dataclass
class TransmissionRecord:
    tx_indices: np.ndarray
    tx_points: np.ndarray
    rx_points: np.ndarray
    rx_indices: np.ndarray

    def __post_init__(self):
        n = len(self.tx_indices)
        if not (len(self.tx_points) == len(self.rx_points) == len(self.rx_indices) == n):
            raise ValueError("transmission record fields must have equal length")


def _check_model(model, schedule: DiffusionSchedule) -> None:
    if isinstance(model, DenoiserModel) and model.T != schedule.T:
        raise ValueError(f"model trained for T={model.T}, schedule has T={schedule.T}")


def shape_constellation(model: DenoiserModel, geometry: ConstellationGeometry, schedule: DiffusionSchedule,
                        snr_db: float, n_samples: int, rng: np.random.Generator,
                        avg_power: float = 1.0, options: SamplerOptions = DEFAULT_SAMPLER) -> ShapingResult:
    """Denoise synthetic noisy symbols at the given SNR and count where they land."""
    _check_model(model, schedule)
    _, y = synthesize_noisy_symbols(geometry, snr_db, avg_power, n_samples, rng)
    x0 = denoise(y, model, schedule, rng, snr_db, options, avg_power)
    psi = project(x0, geometry)
    dist = empirical_distribution(count_occurrences(psi, geometry.order), n_samples)
    untrained = isinstance(model, DenoiserModel) and model.epochs_trained == 0
    return ShapingResult(dist, x0, psi, snr_db, untrained=untrained)


def reconstruct(y, model: DenoiserModel, schedule: DiffusionSchedule, geometry: ConstellationGeometry,
                rng: np.random.Generator, snr_db: float | None = None,
                options: SamplerOptions = DEFAULT_SAMPLER, avg_power: float = 1.0) -> np.ndarray:
    """Run the reverse chain from the received samples and decide the nearest symbol.

    ``snr_db=None`` falls back to unscaled entry at step T.
    """
    _check_model(model, schedule)
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite received samples")
    return project(denoise(y, model, schedule, rng, snr_db, options, avg_power), geometry)


def transmit_round(model: DenoiserModel, geometry: ConstellationGeometry, schedule: DiffusionSchedule,
                   spec: ChannelSpec, n_symbols: int, rng: np.random.Generator,
                   n_shaping: int = 10_000, shaping: ShapingResult | None = None,
                   options: SamplerOptions = DEFAULT_SAMPLER) -> tuple[TransmissionRecord, ShapingResult]:
    """Shape at the channel SNR, send i.i.d. shaped symbols, reconstruct at the receiver.

    Shaping always uses Gaussian synthetic noise; ``spec.family`` only affects the
    real channel. Pass ``shaping`` to reuse a distribution computed at the same SNR.
    """
    if n_symbols <= 0:
        raise ValueError("n_symbols must be positive")
    if shaping is None:
        shaping = shape_constellation(model, geometry, schedule, spec.snr_db, n_shaping, rng,
                                      spec.avg_power, options)
    elif shaping.snr_db != spec.snr_db:
        raise ValueError("shaping result was computed at a different SNR than the channel")
    tx = sample_symbols(shaping.distribution, n_symbols, rng)
    x = geometry.points[tx]
    y = apply_channel(x, spec, rng)
    rx = reconstruct(y, model, schedule, geometry, rng, spec.snr_db, options, spec.avg_power)
    return TransmissionRecord(tx, x, y, rx), shaping
