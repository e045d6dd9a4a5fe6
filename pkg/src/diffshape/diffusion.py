"""Variance schedule, forward noising, DDPM training and the reverse sampler."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .constellation import ConstellationGeometry
from .nn import AdamState, DenoiserModel, adam_step, denoiser_forward, ema_update, mse_loss_and_grad

NoisePredictor = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step arrays are 0-based storage for the 1-based time-steps 1..T."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    alpha_first: float = 0.99999
    alpha_last: float = 0.99

    @property
    def T(self) -> int:
        return self.beta.size

    def alpha_bar_prev(self, t: int) -> float:
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])

    def params(self) -> dict:
        return {"T": self.T, "alpha_first": self.alpha_first, "alpha_last": self.alpha_last,
                "kind": "sigmoid", "logit_span": [-6.0, 6.0]}


def build_schedule(T: int, alpha_first: float = 0.99999, alpha_last: float = 0.99) -> DiffusionSchedule:
    """Sigmoid beta schedule from 1 - alpha_first to 1 - alpha_last over logits in [-6, 6]."""
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    beta_min, beta_max = 1.0 - alpha_first, 1.0 - alpha_last
    if not 0.0 < beta_min < beta_max < 1.0:
        raise ValueError("need 1 > alpha_first > alpha_last > 0")
    beta = beta_min + (beta_max - beta_min) * expit(np.linspace(-6.0, 6.0, T))
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    for a in (beta, alpha, alpha_bar):
        a.setflags(write=False)
    return DiffusionSchedule(beta, alpha, alpha_bar, alpha_first, alpha_last)


def _check_t(t, T: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.int64)
    if t.size and (t.min() < 1 or t.max() > T):
        raise IndexError(f"time-step out of range [1, {T}]")
    return t


def forward_diffuse(x0, t, eps, schedule: DiffusionSchedule) -> np.ndarray:
    """Closed-form marginal sample sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != x0.shape:
        raise ValueError("eps must have the same shape as x0")
    t = _check_t(t, schedule.T)
    ab = schedule.alpha_bar[t - 1]
    if ab.ndim == 1 and x0.ndim == 2:
        ab = ab[:, None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def forward_step(x_prev, t: int, eps, schedule: DiffusionSchedule) -> np.ndarray:
    """One Gaussian kernel step x_t = sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps."""
    _check_t(t, schedule.T)
    b = schedule.beta[t - 1]
    return np.sqrt(1.0 - b) * np.asarray(x_prev, dtype=float) + np.sqrt(b) * np.asarray(eps, dtype=float)


def posterior_params(x_t, x0, t: int, schedule: DiffusionSchedule) -> tuple[np.ndarray, float]:
    """Mean and variance of q(x_{t-1} | x_t, x0)."""
    _check_t(t, schedule.T)
    a = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    ab_prev = schedule.alpha_bar_prev(t)
    b = schedule.beta[t - 1]
    mu = (np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)) * np.asarray(x_t, dtype=float) \
        + (np.sqrt(ab_prev) * b / (1.0 - ab)) * np.asarray(x0, dtype=float)
    return mu, (1.0 - ab_prev) / (1.0 - ab) * b


def train(model: DenoiserModel, geometry: ConstellationGeometry, schedule: DiffusionSchedule,
          epochs: int, batch_size: int, rng: np.random.Generator, learning_rate: float = 1e-3,
          steps_per_epoch: int = 1, adam: AdamState | None = None,
          snapshot: Callable[[int, DenoiserModel], None] | None = None,
          snapshot_every: int = 0) -> tuple[DenoiserModel, list[float]]:
    """Fit the noise predictor on uniformly drawn constellation points.

    Each epoch takes ``steps_per_epoch`` Adam steps on fresh batches, each followed
    by an EMA update; the trace holds the mean batch loss of every epoch.
    """
    if schedule.T != model.T:
        raise ValueError(f"schedule has T={schedule.T} but model embeddings have T={model.T}")
    if steps_per_epoch < 1:
        raise ValueError("steps_per_epoch must be >= 1")
    adam = adam or AdamState(learning_rate=learning_rate)
    trace: list[float] = []
    for epoch in range(1, epochs + 1):
        total = 0.0
        for _ in range(steps_per_epoch):
            x0 = geometry.points[rng.integers(0, geometry.order, size=batch_size)]
            t = rng.integers(1, schedule.T + 1, size=batch_size)
            eps = rng.standard_normal((batch_size, 2))
            x_t = forward_diffuse(x0, t, eps, schedule)
            loss, grads = mse_loss_and_grad(model, x_t, t, eps)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            adam_step(model.params, grads, adam)
            ema_update(model)
            total += loss
        model.epochs_trained += 1
        trace.append(total / steps_per_epoch)
        if snapshot is not None and snapshot_every and epoch % snapshot_every == 0:
            snapshot(epoch, model)
    return model, trace


def _predictor(model: DenoiserModel | NoisePredictor) -> NoisePredictor:
    if isinstance(model, DenoiserModel):
        return lambda x, t: denoiser_forward(model, x, t, use_ema=True)
    return model


def reverse_step(x_t, t: int, z, model: DenoiserModel | NoisePredictor,
                 schedule: DiffusionSchedule) -> np.ndarray:
    """x_{t-1} = (x_t - (1 - a_t) / sqrt(1 - ab_t) * eps) / sqrt(a_t) + sqrt(1 - a_t) z."""
    _check_t(t, schedule.T)
    x_t = np.asarray(x_t, dtype=float)
    a = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    eps = _predictor(model)(x_t, np.full(x_t.shape[0], t))
    mean = (x_t - (1.0 - a) / np.sqrt(1.0 - ab) * eps) / np.sqrt(a)
    if z is None:
        return mean
    return mean + np.sqrt(1.0 - a) * np.asarray(z, dtype=float)


def snr_matched_step(schedule: DiffusionSchedule, snr_db: float, avg_power: float = 1.0) -> int:
    """First step whose forward noise-to-signal ratio reaches the channel's per-coordinate one."""
    from .channel import snr_to_noise_power

    var = snr_to_noise_power(snr_db, avg_power) / 2.0
    nsr = (1.0 - schedule.alpha_bar) / schedule.alpha_bar
    return int(min(np.searchsorted(nsr, var) + 1, schedule.T))


def reverse_sample(x_T, model: DenoiserModel | NoisePredictor, schedule: DiffusionSchedule,
                   rng: np.random.Generator, stochastic: bool = True, start_step: int | None = None,
                   trajectory: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """Run the reverse chain down to t = 1; no noise is injected at t = 1.

    ``stochastic=False`` drops the sqrt(1 - a_t) z term at every step, leaving the
    mean chain. ``start_step`` enters the chain below T (the input is taken as-is).
    """
    x = np.array(x_T, dtype=float).reshape(-1, 2)
    predict = _predictor(model)
    start = schedule.T if start_step is None else start_step
    _check_t(start, schedule.T)
    for t in range(start, 0, -1):
        z = rng.standard_normal(x.shape) if (t > 1 and stochastic) else None
        x = reverse_step(x, t, z, predict, schedule)
        if trajectory is not None:
            trajectory(t - 1, x)
    return x
