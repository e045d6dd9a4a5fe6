"""Comparison systems: uniform shaping with nearest-point demapping, and an
end-to-end trainable constellation with a small ReLU demapper."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

from .channel import ChannelSpec, NoiseFamily, apply_channel, sample_noise, snr_to_noise_power
from .constellation import ConstellationGeometry, ShapingDistribution, project, qam_geometry
from .link import TransmissionRecord
from .nn import FORMAT_VERSION, AdamState, Params, _dump_params, _load_params, adam_step, init_dense


def uniform_shaping(M: int) -> ShapingDistribution:
    if M < 2:
        raise ValueError("need at least two symbols")
    return ShapingDistribution(np.full(M, 1.0 / M))


def uniform_round(geometry: ConstellationGeometry, spec: ChannelSpec, n_symbols: int,
                  rng: np.random.Generator) -> TransmissionRecord:
    """Uniform symbols over the fixed geometry, decided by nearest point."""
    tx = rng.integers(0, geometry.order, size=n_symbols)
    x = geometry.points[tx]
    y = apply_channel(x, spec, rng)
    return TransmissionRecord(tx, x, y, project(y, geometry))


def normalize_power(c: np.ndarray) -> np.ndarray:
    return c / np.sqrt(np.mean(np.sum(c ** 2, axis=1)))


@dataclass
class DnnBaseline:
    """Trainable M x 2 constellation (``C``) followed by a 2-64-64-M ReLU demapper."""

    params: Params
    order: int
    hidden: int = 64
    adam_state: AdamState = field(default_factory=AdamState)
    iterations_trained: int = 0
    trained_snr_db: float | None = None
    trained_family: str = NoiseFamily.GAUSSIAN.value

    @classmethod
    def init(cls, M: int, rng: np.random.Generator, hidden: int = 64) -> "DnnBaseline":
        params: Params = {"C": qam_geometry(M).points.copy()}
        dims = (2, hidden, hidden, M)
        for k in range(3):
            params[f"W{k}"], params[f"b{k}"] = init_dense(rng, dims[k], dims[k + 1])
        return cls(params=params, order=M, hidden=hidden)

    @property
    def constellation(self) -> np.ndarray:
        return normalize_power(self.params["C"])


def _demapper_forward(params: Params, y: np.ndarray):
    a0 = y @ params["W0"].T + params["b0"]
    h0 = np.maximum(a0, 0.0)
    a1 = h0 @ params["W1"].T + params["b1"]
    h1 = np.maximum(a1, 0.0)
    logits = h1 @ params["W2"].T + params["b2"]
    return logits, (y, a0, h0, a1, h1)


def dnn_logits(baseline: DnnBaseline, y) -> np.ndarray:
    return _demapper_forward(baseline.params, np.asarray(y, dtype=float).reshape(-1, 2))[0]


def dnn_demap(baseline: DnnBaseline, y) -> np.ndarray:
    return np.argmax(dnn_logits(baseline, y), axis=1)


def dnn_loss_and_grad(params: Params, symbols: np.ndarray, noise: np.ndarray) -> tuple[float, Params]:
    """Mean cross-entropy of the demapper over a batch, with gradients for every parameter."""
    c = params["C"]
    M = c.shape[0]
    scale = np.sqrt(np.mean(np.sum(c ** 2, axis=1)))
    x = c[symbols] / scale
    logits, (y, a0, h0, a1, h1) = _demapper_forward(params, x + noise)
    logp = log_softmax(logits, axis=1)
    n = symbols.size
    loss = float(-np.mean(logp[np.arange(n), symbols]))

    g = np.exp(logp)
    g[np.arange(n), symbols] -= 1.0
    g /= n
    grads: Params = {"W2": g.T @ h1, "b2": g.sum(axis=0)}
    d = (g @ params["W2"]) * (a1 > 0)
    grads["W1"], grads["b1"] = d.T @ h0, d.sum(axis=0)
    d = (d @ params["W1"]) * (a0 > 0)
    grads["W0"], grads["b0"] = d.T @ y, d.sum(axis=0)
    dy = d @ params["W0"]
    # back through x = C[s] / sqrt(mean |C|^2)
    dx = np.zeros_like(c)
    np.add.at(dx, symbols, dy)
    grads["C"] = dx / scale - c * np.sum(dx * c) / (M * scale ** 3)
    return loss, grads


def train_dnn_baseline(M: int, snr_db: float, rng: np.random.Generator, iterations: int = 5000,
                       batch_size: int = 128, learning_rate: float = 1e-3,
                       family: NoiseFamily | str = NoiseFamily.GAUSSIAN,
                       baseline: DnnBaseline | None = None) -> tuple[DnnBaseline, list[float]]:
    if M not in (16, 64):
        raise ValueError(f"unsupported modulation order {M}")
    b = baseline or DnnBaseline.init(M, rng)
    b.adam_state.learning_rate = learning_rate
    noise_power = snr_to_noise_power(snr_db)
    trace = []
    for _ in range(iterations):
        s = rng.integers(0, M, size=batch_size)
        noise = sample_noise(family, noise_power, (batch_size, 2), rng)
        loss, grads = dnn_loss_and_grad(b.params, s, noise)
        adam_step(b.params, grads, b.adam_state)
        b.params["C"] = normalize_power(b.params["C"])
        trace.append(loss)
    b.iterations_trained += iterations
    b.trained_snr_db = snr_db
    b.trained_family = NoiseFamily(family).value
    return b, trace


def dnn_round(baseline: DnnBaseline, spec: ChannelSpec, n_symbols: int,
              rng: np.random.Generator) -> TransmissionRecord:
    """Uniform symbols over the learned constellation, decided by the neural demapper."""
    tx = rng.integers(0, baseline.order, size=n_symbols)
    x = baseline.constellation[tx]
    y = apply_channel(x, spec, rng)
    return TransmissionRecord(tx, x, y, dnn_demap(baseline, y))


def baseline_to_dict(b: DnnBaseline) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_type": "dnn_baseline",
        "order": b.order,
        "hidden": b.hidden,
        "iterations_trained": b.iterations_trained,
        "trained_snr_db": b.trained_snr_db,
        "trained_family": b.trained_family,
        "weights": _dump_params(b.params),
    }


def baseline_from_dict(doc: dict) -> DnnBaseline:
    if doc.get("format_version") != FORMAT_VERSION or doc.get("model_type") != "dnn_baseline":
        raise ValueError("not a DNN baseline model document")
    return DnnBaseline(params=_load_params(doc["weights"]), order=int(doc["order"]),
                       hidden=int(doc["hidden"]), iterations_trained=int(doc["iterations_trained"]),
                       trained_snr_db=doc["trained_snr_db"], trained_family=doc["trained_family"])
