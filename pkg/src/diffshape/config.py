"""Experiment configuration: nested dataclasses loaded from YAML or JSON.

Every field is type-checked on load and errors name the offending field path,
e.g. ``training.epochs``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .channel import NoiseFamily
from .constellation import SUPPORTED_ORDERS


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class ScheduleConfig:
    T: int = 100
    alpha_first: float = 0.99999
    alpha_last: float = 0.99


@dataclass
class TrainingConfig:
    epochs: int = 1000
    steps_per_epoch: int = 20
    batch_size: int = 128
    learning_rate: float = 1e-3
    ema_decay: float = 0.9
    hidden: int = 128
    seed: int = 0
    snapshot_every: int = 0
    snapshot_points: int = 1000


@dataclass
class ShapingConfig:
    N_s: int = 10_000


@dataclass
class SamplerConfig:
    stochastic: bool = False
    entry: str = "snr_matched"


@dataclass
class EvaluationConfig:
    snr_grid_db: list[float] = field(default_factory=lambda: [float(s) for s in range(-30, 31, 5)])
    noise_families: list[str] = field(default_factory=lambda: ["gaussian", "laplacian"])
    n_symbols_per_point: int = 10_000
    realizations: int = 30
    random_snr_set: list[float] = field(default_factory=lambda: [float(s) for s in range(-20, 11)])
    boxplot_families: list[str] = field(default_factory=lambda: [f.value for f in NoiseFamily])


@dataclass
class BaselineConfig:
    snr_db: float = 0.0
    iterations: int = 5000
    batch_size: int = 128
    learning_rate: float = 1e-3
    hidden: int = 64


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "json"])


@dataclass
class ExperimentConfig:
    modulation_order: int = 16
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    shaping: ShapingConfig = field(default_factory=ShapingConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int = 1

    @classmethod
    def for_order(cls, M: int) -> "ExperimentConfig":
        """Defaults for 16-QAM, or the longer 64-QAM setup (T=200, 5000 epochs)."""
        cfg = cls(modulation_order=M)
        if M == 64:
            cfg.schedule.T = 200
            cfg.training.epochs = 5000
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Hash of everything that affects results; worker count and output location do not."""
        doc = self.to_dict()
        doc.pop("workers")
        doc["output"].pop("directory")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def validate(self) -> "ExperimentConfig":
        def need(cond, path, msg):
            if not cond:
                raise ConfigError(path, msg)

        need(self.modulation_order in SUPPORTED_ORDERS, "modulation_order", f"must be one of {SUPPORTED_ORDERS}")
        s = self.schedule
        need(s.T >= 2, "schedule.T", "must be >= 2")
        need(0 < s.alpha_last < s.alpha_first < 1, "schedule.alpha_first",
             "need 0 < alpha_last < alpha_first < 1")
        t = self.training
        need(t.epochs >= 0, "training.epochs", "must be >= 0")
        need(t.steps_per_epoch >= 1, "training.steps_per_epoch", "must be >= 1")
        need(t.batch_size >= 1, "training.batch_size", "must be >= 1")
        need(t.learning_rate > 0, "training.learning_rate", "must be positive")
        need(0 <= t.ema_decay <= 1, "training.ema_decay", "must lie in [0, 1]")
        need(t.hidden >= 1, "training.hidden", "must be >= 1")
        need(t.seed >= 0, "training.seed", "must be >= 0")
        need(t.snapshot_every >= 0, "training.snapshot_every", "must be >= 0")
        need(t.snapshot_points >= 1, "training.snapshot_points", "must be >= 1")
        need(self.shaping.N_s >= 1, "shaping.N_s", "must be >= 1")
        need(self.sampler.entry in ("full", "snr_matched"), "sampler.entry", "must be 'full' or 'snr_matched'")
        e = self.evaluation
        need(len(e.snr_grid_db) > 0, "evaluation.snr_grid_db", "must be non-empty")
        need(len(e.noise_families) > 0, "evaluation.noise_families", "must be non-empty")
        need(len(e.boxplot_families) > 0, "evaluation.boxplot_families", "must be non-empty")
        valid = {f.value for f in NoiseFamily}
        for name in ("noise_families", "boxplot_families"):
            for i, fam in enumerate(getattr(e, name)):
                need(fam in valid, f"evaluation.{name}[{i}]", f"unknown noise family {fam!r}")
        need(e.n_symbols_per_point >= 1, "evaluation.n_symbols_per_point", "must be >= 1")
        need(e.realizations >= 1, "evaluation.realizations", "must be >= 1")
        need(len(e.random_snr_set) > 0, "evaluation.random_snr_set", "must be non-empty")
        b = self.baseline
        need(b.iterations >= 0, "baseline.iterations", "must be >= 0")
        need(b.batch_size >= 1, "baseline.batch_size", "must be >= 1")
        need(b.learning_rate > 0, "baseline.learning_rate", "must be positive")
        need(b.hidden >= 1, "baseline.hidden", "must be >= 1")
        for i, fmt in enumerate(self.output.formats):
            need(fmt in ("csv", "json"), f"output.formats[{i}]", f"unknown format {fmt!r}")
        need(self.workers >= 1, "workers", "must be >= 1")
        return self


def _coerce(value, tp, path: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, "expected a mapping")
        return _build(tp, value, path)
    if origin is list:
        (item_tp,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(path, "expected a list")
        return [_coerce(v, item_tp, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, "expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def _build(cls, doc: dict, prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"{prefix}{key}" if not prefix else f"{prefix}.{key}", "unknown field")
    kwargs = {}
    for name in names:
        if name in doc:
            path = name if not prefix else f"{prefix}.{name}"
            kwargs[name] = _coerce(doc[name], hints[name], path)
    return cls(**kwargs)


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Start from the defaults for the requested order, then apply the document."""
    if not isinstance(doc, dict):
        raise ConfigError("", "config document must be a mapping")
    order = doc.get("modulation_order", 16)
    if order not in SUPPORTED_ORDERS:
        raise ConfigError("modulation_order", f"must be one of {SUPPORTED_ORDERS}")
    base = ExperimentConfig.for_order(order).to_dict()
    merged = _merge(base, doc)
    return _build(ExperimentConfig, merged).validate()


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML or JSON config file (JSON is valid YAML, so one parser covers both)."""
    text = Path(path).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from exc
    return config_from_dict(doc or {})
