"""Small dense-network substrate: time-conditioned denoiser, Adam, EMA.

Parameters live in plain ``dict[str, np.ndarray]`` so the optimizer, the EMA
shadow and the JSON serializer can all walk them the same way.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

FORMAT_VERSION = 1

Params = dict[str, np.ndarray]

_CHUNK = 1024


def softplus(u: np.ndarray) -> np.ndarray:
    # ~4x faster than np.logaddexp(0, u) and equally stable
    out = np.abs(u)
    np.negative(out, out=out)
    np.exp(out, out=out)
    np.log1p(out, out=out)
    out += np.maximum(u, 0.0)
    return out


def init_dense(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform(+-sqrt(1/fan_in)) weights (out x in) and a zero bias."""
    bound = np.sqrt(1.0 / fan_in)
    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    return w, np.zeros(fan_out)


@dataclass
class DenoiserModel:
    """Noise predictor eps(x_t, t) with one multiplicative embedding table per hidden layer."""

    params: Params
    T: int
    layer_dims: tuple[int, ...] = (2, 128, 128, 128, 2)
    ema_decay: float = 0.9
    shadow: Params | None = None
    epochs_trained: int = 0

    def __post_init__(self):
        dims = self.layer_dims
        if dims[0] != 2 or dims[-1] != 2:
            raise ValueError("denoiser input and output must be 2-D (I/Q)")
        for k in range(self.n_hidden):
            w, b, e = self.params[f"W{k}"], self.params[f"b{k}"], self.params[f"E{k}"]
            if w.shape != (dims[k + 1], dims[k]) or b.shape != (dims[k + 1],):
                raise ValueError(f"hidden layer {k} has shape {w.shape}, expected {(dims[k + 1], dims[k])}")
            if e.shape != (self.T, dims[k + 1]):
                raise ValueError(f"embedding table {k} must be {(self.T, dims[k + 1])}, got {e.shape}")
        if self.params["Wout"].shape != (dims[-1], dims[-2]):
            raise ValueError("output layer shape mismatch")
        if self.shadow is not None:
            for name, p in self.params.items():
                if self.shadow[name].shape != p.shape:
                    raise ValueError(f"EMA shadow for {name} has wrong shape")

    @property
    def n_hidden(self) -> int:
        return len(self.layer_dims) - 2

    @classmethod
    def init(cls, T: int, rng: np.random.Generator, hidden: int = 128, n_hidden: int = 3,
             ema_decay: float = 0.9) -> "DenoiserModel":
        dims = (2,) + (hidden,) * n_hidden + (2,)
        params: Params = {}
        for k in range(n_hidden):
            params[f"W{k}"], params[f"b{k}"] = init_dense(rng, dims[k], dims[k + 1])
            params[f"E{k}"] = np.ones((T, dims[k + 1]))
        params["Wout"], params["bout"] = init_dense(rng, dims[-2], dims[-1])
        return cls(params=params, T=T, layer_dims=dims, ema_decay=ema_decay)

    def sampling_params(self) -> Params:
        """Weights used by every sampling-phase operation: the EMA shadow when present."""
        return self.shadow if self.shadow is not None else self.params

    def zero_like(self) -> Params:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def _check_inputs(model: DenoiserModel, x: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    t = np.asarray(t)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"x must have shape (n, 2), got {x.shape}")
    if t.ndim == 0:
        t = np.full(x.shape[0], int(t))
    if t.shape != (x.shape[0],):
        raise ValueError("t must be a scalar or one step per row of x")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite denoiser input")
    if t.size and (t.min() < 1 or t.max() > model.T):
        raise IndexError(f"time-step out of range [1, {model.T}]")
    return x, t.astype(np.int64)


def _forward(params: Params, n_hidden: int, x: np.ndarray, t: np.ndarray):
    rows = t - 1
    h = x
    cache = []
    for k in range(n_hidden):
        a = h @ params[f"W{k}"].T + params[f"b{k}"]
        emb = params[f"E{k}"][rows]
        u = a * emb
        cache.append((h, a, emb, u))
        h = softplus(u)
    out = h @ params["Wout"].T + params["bout"]
    return out, cache, h


def _forward_inference(params: Params, n_hidden: int, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    # same arithmetic as _forward, without the cache; a single shared t broadcasts one embedding row
    rows = t - 1
    shared = rows.size > 0 and np.all(rows == rows[0])
    h = x
    for k in range(n_hidden):
        u = h @ params[f"W{k}"].T
        u += params[f"b{k}"]
        u *= params[f"E{k}"][rows[0]] if shared else params[f"E{k}"][rows]
        h = softplus(u)
    return h @ params["Wout"].T + params["bout"]


def denoiser_forward(model: DenoiserModel, x, t, use_ema: bool = False) -> np.ndarray:
    """Predicted noise for a batch of points ``x`` (n x 2) at time-steps ``t`` in [1, T]."""
    x, t = _check_inputs(model, x, t)
    params = model.sampling_params() if use_ema else model.params
    if x.shape[0] <= _CHUNK:
        return _forward_inference(params, model.n_hidden, x, t)
    # fixed-size row blocks keep the hidden activations cache-resident
    return np.concatenate([_forward_inference(params, model.n_hidden, x[i:i + _CHUNK], t[i:i + _CHUNK])
                           for i in range(0, x.shape[0], _CHUNK)])


def denoiser_backward(model: DenoiserModel, x, t, upstream_grad) -> Params:
    """Gradient of ``sum(upstream_grad * eps(x, t))`` w.r.t. every live parameter."""
    x, t = _check_inputs(model, x, t)
    g = np.asarray(upstream_grad, dtype=float)
    if g.shape != x.shape:
        raise ValueError(f"upstream gradient shape {g.shape} does not match output {x.shape}")
    params = model.params
    _, cache, h_last = _forward(params, model.n_hidden, x, t)
    grads: Params = {}
    grads["Wout"] = g.T @ h_last
    grads["bout"] = g.sum(axis=0)
    dh = g @ params["Wout"]
    rows = t - 1
    for k in reversed(range(model.n_hidden)):
        h_prev, a, emb, u = cache[k]
        du = dh * expit(u)
        d_emb = np.zeros_like(params[f"E{k}"])
        np.add.at(d_emb, rows, du * a)
        grads[f"E{k}"] = d_emb
        da = du * emb
        grads[f"W{k}"] = da.T @ h_prev
        grads[f"b{k}"] = da.sum(axis=0)
        dh = da @ params[f"W{k}"]
    return grads


def mse_loss_and_grad(model: DenoiserModel, x_t, t, eps) -> tuple[float, Params]:
    """Mean over batch and both coordinates of (eps - eps_hat)^2, with its gradient."""
    x_t, t = _check_inputs(model, x_t, t)
    pred, _, _ = _forward(model.params, model.n_hidden, x_t, t)
    diff = pred - eps
    loss = float(np.mean(diff ** 2))
    upstream = 2.0 * diff / diff.size
    return loss, denoiser_backward(model, x_t, t, upstream)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """Bias-corrected Adam update, applied in place to ``params``."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step_count
    c2 = 1.0 - b2 ** state.step_count
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def ema_update(model: DenoiserModel) -> DenoiserModel:
    if model.shadow is None:
        model.shadow = {k: v.copy() for k, v in model.params.items()}
        return model
    d = model.ema_decay
    for name, p in model.params.items():
        s = model.shadow[name]
        s *= d
        s += (1.0 - d) * p
    return model


# -- serialization -----------------------------------------------------------

def _dump_params(params: Params) -> dict:
    return {k: v.tolist() for k, v in params.items()}


def _load_params(doc: dict) -> Params:
    return {k: np.asarray(v, dtype=float) for k, v in doc.items()}


def model_to_dict(model: DenoiserModel, schedule_params: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "model_type": "ddpm_denoiser",
        "T": model.T,
        "layer_dims": list(model.layer_dims),
        "ema_decay": model.ema_decay,
        "epochs_trained": model.epochs_trained,
        "weights": _dump_params({k: v for k, v in model.params.items() if not k.startswith("E")}),
        "embeddings": _dump_params({k: v for k, v in model.params.items() if k.startswith("E")}),
        "ema_shadow": None if model.shadow is None else _dump_params(model.shadow),
        "schedule_params": schedule_params or {},
    }


def model_from_dict(doc: dict) -> DenoiserModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    if doc.get("model_type", "ddpm_denoiser") != "ddpm_denoiser":
        raise ValueError(f"not a denoiser model: {doc.get('model_type')!r}")
    params = _load_params(doc["weights"]) | _load_params(doc["embeddings"])
    shadow = None if doc["ema_shadow"] is None else _load_params(doc["ema_shadow"])
    return DenoiserModel(params=params, T=int(doc["T"]), layer_dims=tuple(doc["layer_dims"]),
                         ema_decay=float(doc["ema_decay"]), shadow=shadow,
                         epochs_trained=int(doc.get("epochs_trained", 0)))


def save_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
