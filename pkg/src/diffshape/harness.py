"""Experiment orchestration: training runs, SNR sweeps, random-SNR box-plot runs, reports.

Randomness
----------
Every stochastic operation draws from its own generator, seeded from
``sha256("<seed>/<tag>/<i>/<j>...")`` (first 16 bytes, little endian). A sweep
point therefore sees the same numbers whichever worker runs it, and reports are
byte-identical for a given (config, seed) at any worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (DnnBaseline, baseline_from_dict, baseline_to_dict, dnn_round,
                        train_dnn_baseline, uniform_round)
from .channel import ChannelSpec, NoiseFamily
from .config import ExperimentConfig
from .constellation import ConstellationGeometry, qam_geometry
from .diffusion import DiffusionSchedule, build_schedule, reverse_sample, train
from .link import SamplerOptions, ShapingResult, TransmissionRecord, shape_constellation, transmit_round
from .metrics import cosine_similarity, entropy, mutual_information, symbol_error_rate
from .nn import DenoiserModel, load_json, model_from_dict, model_to_dict, save_json

REPORT_SCHEMA_VERSION = 1
CSV_HEADER = ("snr_db", "family", "scheme", "mi_bits", "csim", "ser", "entropy_bits")
BOXPLOT_HEADER = ("realization", "snr_db", "family", "scheme", "mi_bits", "csim")


class ReportIOError(OSError):
    """Writing an output file failed; the message carries the path."""


def substream(seed: int, tag: str, *index) -> np.random.Generator:
    key = "/".join([str(int(seed)), tag, *(str(i) for i in index)])
    digest = hashlib.sha256(key.encode()).digest()
    return np.random.default_rng(np.random.SeedSequence(int.from_bytes(digest[:16], "little")))


def _num(x: float) -> str:
    # repr round-trips doubles exactly and is platform independent
    return repr(float(x))


def _geometry_schedule(cfg: ExperimentConfig) -> tuple[ConstellationGeometry, DiffusionSchedule]:
    s = cfg.schedule
    return qam_geometry(cfg.modulation_order), build_schedule(s.T, s.alpha_first, s.alpha_last)


def _sampler(cfg: ExperimentConfig) -> SamplerOptions:
    return SamplerOptions(stochastic=cfg.sampler.stochastic, entry=cfg.sampler.entry)


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_csv(path: Path, header, rows) -> Path:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _write_json(path: Path, doc) -> Path:
    with _open_for_write(path) as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return path


# -- model files ---------------------------------------------------------------

def save_model(model: DenoiserModel, order: int, schedule: DiffusionSchedule, path: str | Path) -> Path:
    doc = model_to_dict(model, schedule.params())
    doc["modulation_order"] = order
    doc["untrained"] = model.epochs_trained == 0
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_json(doc, path)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def load_model(path: str | Path) -> tuple[DenoiserModel, dict]:
    """Model plus the file's metadata (modulation order, schedule parameters)."""
    doc = load_json(path)
    meta = {"modulation_order": doc.get("modulation_order"), "schedule_params": doc.get("schedule_params", {}),
            "untrained": doc.get("untrained", False)}
    return model_from_dict(doc), meta


def save_baseline(b: DnnBaseline, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_json(baseline_to_dict(b), path)
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def load_baseline(path: str | Path) -> DnnBaseline:
    return baseline_from_dict(load_json(path))


def check_model_matches(cfg: ExperimentConfig, model: DenoiserModel, model_order: int | None = None) -> None:
    if model.T != cfg.schedule.T:
        raise ValueError(f"model has T={model.T} but config schedule.T={cfg.schedule.T}")
    if model_order is not None and model_order != cfg.modulation_order:
        raise ValueError(f"model was trained for {model_order}-QAM, config asks for "
                         f"{cfg.modulation_order}-QAM")


# -- training ------------------------------------------------------------------

@dataclass
class TrainingArtifacts:
    model: DenoiserModel
    trace: list[float]
    model_path: Path | None = None
    trace_path: Path | None = None

    @property
    def untrained(self) -> bool:
        return self.model.epochs_trained == 0


def run_training(cfg: ExperimentConfig, out_dir: str | Path | None = None,
                 seed: int | None = None) -> TrainingArtifacts:
    """Train the denoiser; with ``out_dir`` also write model.json and loss_trace.csv."""
    cfg.validate()
    seed = cfg.training.seed if seed is None else seed
    t = cfg.training
    geometry, schedule = _geometry_schedule(cfg)
    model = DenoiserModel.init(schedule.T, substream(seed, "init"), hidden=t.hidden, ema_decay=t.ema_decay)

    snapshot = None
    if out_dir is not None and t.snapshot_every:
        snap_dir = Path(out_dir) / "snapshots"

        def snapshot(epoch: int, m: DenoiserModel) -> None:
            rng = substream(seed, "snapshot", epoch)
            x = reverse_sample(rng.standard_normal((t.snapshot_points, 2)), m, schedule, rng)
            _write_csv(snap_dir / f"epoch_{epoch:06d}.csv", ("i", "q"), ([_num(a), _num(b)] for a, b in x))

    model, trace = train(model, geometry, schedule, t.epochs, t.batch_size, substream(seed, "train"),
                         learning_rate=t.learning_rate, steps_per_epoch=t.steps_per_epoch,
                         snapshot=snapshot, snapshot_every=t.snapshot_every)
    art = TrainingArtifacts(model, trace)
    if out_dir is not None:
        out = Path(out_dir)
        art.model_path = save_model(model, cfg.modulation_order, schedule, out / "model.json")
        art.trace_path = write_loss_trace(trace, out / "loss_trace.csv")
    return art


def write_loss_trace(trace, path: str | Path) -> Path:
    return _write_csv(Path(path), ("epoch", "loss"), ([i + 1, _num(v)] for i, v in enumerate(trace)))


def run_baseline_training(cfg: ExperimentConfig, seed: int | None = None,
                          family: NoiseFamily | str = NoiseFamily.GAUSSIAN,
                          snr_db: float | None = None) -> tuple[DnnBaseline, list[float]]:
    seed = cfg.training.seed if seed is None else seed
    b = cfg.baseline
    snr = b.snr_db if snr_db is None else snr_db
    family = NoiseFamily(family)
    rng = substream(seed, "baseline", family.value)
    init = DnnBaseline.init(cfg.modulation_order, rng, hidden=b.hidden)
    return train_dnn_baseline(cfg.modulation_order, snr, rng, iterations=b.iterations,
                              batch_size=b.batch_size, learning_rate=b.learning_rate,
                              family=family, baseline=init)


# -- sweeps --------------------------------------------------------------------

@dataclass
class SweepRecord:
    snr_db: float
    family: str
    scheme: str
    mi_bits: float
    csim: float
    ser: float
    entropy_bits: float

    def row(self) -> list[str]:
        return [_num(self.snr_db), self.family, self.scheme, _num(self.mi_bits), _num(self.csim),
                _num(self.ser), _num(self.entropy_bits)]


@dataclass
class RunReport:
    records: list[SweepRecord]
    order: int
    distributions: dict[float, np.ndarray] = field(default_factory=dict)  # DDPM shaping per SNR
    metadata: dict = field(default_factory=dict)
    wall_time_s: float = 0.0  # kept out of the emitted files so they stay reproducible

    def select(self, scheme: str, family: str) -> list[SweepRecord]:
        return sorted((r for r in self.records if r.scheme == scheme and r.family == family),
                      key=lambda r: r.snr_db)


def decided_points(rec: TransmissionRecord, points: np.ndarray) -> np.ndarray:
    return points[rec.rx_indices]


def _score(snr, family, scheme, rec: TransmissionRecord, points: np.ndarray, h: float) -> SweepRecord:
    M = points.shape[0]
    return SweepRecord(float(snr), family, scheme, mutual_information(rec.tx_indices, rec.rx_indices, M),
                       cosine_similarity(rec.tx_points, decided_points(rec, points)),
                       symbol_error_rate(rec.tx_indices, rec.rx_indices), h)


def _sweep_point(cfg: ExperimentConfig, model, baseline: DnnBaseline | None,
                 retrained: dict[str, DnnBaseline], seed: int, i: int, snr: float):
    geometry, schedule = _geometry_schedule(cfg)
    M, n = geometry.order, cfg.evaluation.n_symbols_per_point
    opts = _sampler(cfg)
    shaping = shape_constellation(model, geometry, schedule, snr, cfg.shaping.N_s,
                                  substream(seed, "shape", i), options=opts)
    h_ddpm = entropy(shaping.distribution)
    records = []
    for j, fam in enumerate(cfg.evaluation.noise_families):
        spec = ChannelSpec(fam, snr)
        rec, _ = transmit_round(model, geometry, schedule, spec, n, substream(seed, "ddpm", i, j),
                                shaping=shaping, options=opts)
        records.append(_score(snr, fam, "ddpm", rec, geometry.points, h_ddpm))
        rec = uniform_round(geometry, spec, n, substream(seed, "uniform", i, j))
        records.append(_score(snr, fam, "uniform", rec, geometry.points, math.log2(M)))
        if baseline is not None:
            rec = dnn_round(baseline, spec, n, substream(seed, "dnn", i, j))
            records.append(_score(snr, fam, "dnn", rec, baseline.constellation, math.log2(M)))
        if fam in retrained:
            b = retrained[fam]
            rec = dnn_round(b, spec, n, substream(seed, "dnn-retrained", i, j))
            records.append(_score(snr, fam, "dnn_retrained", rec, b.constellation, math.log2(M)))
    return records, shaping.distribution.probs


def _fan_out(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def _metadata(cfg: ExperimentConfig, seed: int, **extra) -> dict:
    return {"config_hash": cfg.digest(), "seed": seed, "version": f"diffshape {__version__}",
            "modulation_order": cfg.modulation_order,
            "sampler": {"stochastic": cfg.sampler.stochastic, "entry": cfg.sampler.entry}, **extra}


def run_sweep(cfg: ExperimentConfig, model, baseline: DnnBaseline | None = None, seed: int | None = None,
              model_order: int | None = None, retrain_baseline_ood: bool = False,
              workers: int | None = None) -> RunReport:
    """Every SNR x noise family: DDPM round, uniform round and (if given) the DNN baseline.

    The shaping distribution is computed once per SNR and shared by all families.
    With ``retrain_baseline_ood`` a fresh baseline is also trained under each
    non-Gaussian family and reported as scheme ``dnn_retrained``.
    """
    cfg.validate()
    if isinstance(model, DenoiserModel):
        check_model_matches(cfg, model, model_order)
    if baseline is not None and baseline.order != cfg.modulation_order:
        raise ValueError(f"baseline is {baseline.order}-QAM, config asks for {cfg.modulation_order}-QAM")
    seed = cfg.training.seed if seed is None else seed
    start = time.perf_counter()
    retrained: dict[str, DnnBaseline] = {}
    if retrain_baseline_ood:
        if baseline is None:
            raise ValueError("--retrain-baseline-ood needs a baseline to copy the training SNR from")
        for fam in cfg.evaluation.noise_families:
            if fam != NoiseFamily.GAUSSIAN.value:
                retrained[fam], _ = run_baseline_training(cfg, seed, fam, baseline.trained_snr_db)
    jobs = [(cfg, model, baseline, retrained, seed, i, float(snr))
            for i, snr in enumerate(cfg.evaluation.snr_grid_db)]
    results = _fan_out(_sweep_point, jobs, workers or cfg.workers)
    report = RunReport([], cfg.modulation_order,
                       metadata=_metadata(cfg, seed, families=list(cfg.evaluation.noise_families),
                                          baseline=None if baseline is None else
                                          {"trained_snr_db": baseline.trained_snr_db,
                                           "iterations": baseline.iterations_trained,
                                           "family": baseline.trained_family}))
    for (records, probs), (*_, snr) in zip(results, jobs):
        report.records.extend(records)
        report.distributions[snr] = probs
    report.wall_time_s = time.perf_counter() - start
    return report


def run_shaping(cfg: ExperimentConfig, model, snr_db: float, seed: int | None = None) -> ShapingResult:
    cfg.validate()
    geometry, schedule = _geometry_schedule(cfg)
    seed = cfg.training.seed if seed is None else seed
    return shape_constellation(model, geometry, schedule, snr_db, cfg.shaping.N_s,
                               substream(seed, "shape-single", _num(snr_db)), options=_sampler(cfg))


def write_shaping(result: ShapingResult, geometry: ConstellationGeometry, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    tag = _snr_tag(result.snr_db)
    dist = _write_distribution(out / f"shaping_snr_{tag}.csv", geometry, result.distribution.probs)
    raw = _write_csv(out / f"shaping_raw_snr_{tag}.csv", ("i", "q", "symbol"),
                     ([_num(a), _num(b), int(s)] for (a, b), s in zip(result.raw_outputs, result.symbols)))
    return [dist, raw]


# -- box plots -----------------------------------------------------------------

@dataclass
class BoxplotRow:
    realization: int
    snr_db: float
    family: str
    scheme: str
    mi_bits: float
    csim: float

    def row(self) -> list[str]:
        return [str(self.realization), _num(self.snr_db), self.family, self.scheme,
                _num(self.mi_bits), _num(self.csim)]


def _boxplot_realization(cfg: ExperimentConfig, model, seed: int, r: int) -> list[BoxplotRow]:
    geometry, schedule = _geometry_schedule(cfg)
    ev = cfg.evaluation
    snr = float(ev.random_snr_set[int(substream(seed, "boxplot-snr", r).integers(len(ev.random_snr_set)))])
    opts = _sampler(cfg)
    shaping = shape_constellation(model, geometry, schedule, snr, cfg.shaping.N_s,
                                  substream(seed, "boxplot-shape", r), options=opts)
    rows = []
    for j, fam in enumerate(ev.boxplot_families):
        spec = ChannelSpec(fam, snr)
        rec, _ = transmit_round(model, geometry, schedule, spec, ev.n_symbols_per_point,
                                substream(seed, "boxplot-ddpm", r, j), shaping=shaping, options=opts)
        s = _score(snr, fam, "ddpm", rec, geometry.points, 0.0)
        rows.append(BoxplotRow(r, snr, fam, "ddpm", s.mi_bits, s.csim))
        rec = uniform_round(geometry, spec, ev.n_symbols_per_point, substream(seed, "boxplot-uniform", r, j))
        s = _score(snr, fam, "uniform", rec, geometry.points, 0.0)
        rows.append(BoxplotRow(r, snr, fam, "uniform", s.mi_bits, s.csim))
    return rows


def run_boxplot_experiment(cfg: ExperimentConfig, model, seed: int | None = None,
                           model_order: int | None = None, workers: int | None = None) -> list[BoxplotRow]:
    """Independent realizations at SNRs drawn from the random set, DDPM vs uniform per family."""
    cfg.validate()
    if isinstance(model, DenoiserModel):
        check_model_matches(cfg, model, model_order)
    seed = cfg.training.seed if seed is None else seed
    jobs = [(cfg, model, seed, r) for r in range(cfg.evaluation.realizations)]
    return [row for rows in _fan_out(_boxplot_realization, jobs, workers or cfg.workers) for row in rows]


def summarize_boxplot(rows: list[BoxplotRow]) -> dict:
    """Median, quartiles and extremes of MI and CSIM per (family, scheme)."""
    out: dict = {}
    for fam in dict.fromkeys(r.family for r in rows):
        for scheme in dict.fromkeys(r.scheme for r in rows):
            sel = [r for r in rows if r.family == fam and r.scheme == scheme]
            if not sel:
                continue
            entry = {}
            for metric in ("mi_bits", "csim"):
                v = np.array([getattr(r, metric) for r in sel])
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                entry[metric] = {"median": float(med), "q1": float(q1), "q3": float(q3),
                                 "min": float(v.min()), "max": float(v.max())}
            out.setdefault(fam, {})[scheme] = entry
    return out


def emit_boxplot(rows: list[BoxplotRow], cfg: ExperimentConfig, seed: int, out_dir: str | Path,
                 formats=("csv", "json")) -> list[Path]:
    if not rows:
        raise ValueError("empty box-plot result")
    out = Path(out_dir)
    paths = []
    if "csv" in formats:
        paths.append(_write_csv(out / "boxplot.csv", BOXPLOT_HEADER, (r.row() for r in rows)))
    if "json" in formats:
        doc = {"schema_version": REPORT_SCHEMA_VERSION, "metadata": _metadata(cfg, seed),
               "summary": summarize_boxplot(rows), "rows": [asdict(r) for r in rows]}
        paths.append(_write_json(out / "boxplot.json", doc))
    return paths


# -- reports -------------------------------------------------------------------

def _snr_tag(snr: float) -> str:
    return f"{snr:g}".replace("-", "m").replace(".", "p")


def _write_distribution(path: Path, geometry: ConstellationGeometry, probs: np.ndarray) -> Path:
    return _write_csv(path, ("index", "i", "q", "bits", "prob"),
                      ([k, _num(geometry.points[k, 0]), _num(geometry.points[k, 1]), geometry.labels[k],
                        _num(probs[k])] for k in range(geometry.order)))


def report_to_dict(report: RunReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "modulation_order": report.order,
        "metadata": report.metadata,
        "records": [asdict(r) for r in report.records],
        "distributions": [{"snr_db": snr, "probs": [float(p) for p in probs]}
                          for snr, probs in sorted(report.distributions.items())],
    }


def report_from_dict(doc: dict) -> RunReport:
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema_version {doc.get('schema_version')!r}")
    return RunReport([SweepRecord(**r) for r in doc["records"]], int(doc["modulation_order"]),
                     {d["snr_db"]: np.array(d["probs"]) for d in doc["distributions"]}, doc["metadata"])


def emit_report(report: RunReport, out_dir: str | Path, formats=("csv", "json")) -> list[Path]:
    """report.csv, report.json and one shaping_snr_<snr>.csv per SNR under distributions/."""
    if not report.records:
        raise ValueError("refusing to emit an empty report")
    out = Path(out_dir)
    paths = []
    if "csv" in formats:
        paths.append(_write_csv(out / "report.csv", CSV_HEADER, (r.row() for r in report.records)))
        geometry = qam_geometry(report.order)
        for snr, probs in sorted(report.distributions.items()):
            paths.append(_write_distribution(out / "distributions" / f"shaping_snr_{_snr_tag(snr)}.csv",
                                             geometry, probs))
    if "json" in formats:
        paths.append(_write_json(out / "report.json", report_to_dict(report)))
    return paths
