"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .channel import NoiseFamily
from .config import ConfigError, ExperimentConfig, load_config
from .constellation import qam_geometry
from .harness import (emit_boxplot, emit_report, load_baseline, load_model, run_baseline_training,
                      run_boxplot_experiment, run_shaping, run_sweep, run_training, save_baseline,
                      summarize_boxplot, write_loss_trace, write_shaping)
from .metrics import entropy

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad arguments are configuration errors, not argparse's default exit 2 (reserved for I/O)
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diffshape", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=False, out=True):
        sp.add_argument("--config", type=Path, help="YAML or JSON experiment config")
        sp.add_argument("--seed", type=_seed, help="master seed (overrides training.seed)")
        if out:
            sp.add_argument("--out", type=Path, help="output directory (overrides output.directory)")
        if model:
            sp.add_argument("--model", type=Path, required=True, help="trained denoiser JSON")

    common(sub.add_parser("train", help="train the denoiser, write model.json and loss_trace.csv"))
    sp = sub.add_parser("shape", help="shaping distribution at one SNR")
    common(sp, model=True)
    sp.add_argument("--snr", type=float, required=True, help="channel SNR in dB")
    sp = sub.add_parser("sweep", help="MI / CSIM / SER over the SNR grid and noise families")
    common(sp, model=True)
    sp.add_argument("--baseline", type=Path, help="trained DNN baseline JSON to add as a column")
    sp.add_argument("--retrain-baseline-ood", action="store_true",
                    help="also train the baseline under each non-Gaussian family")
    sp.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    sp = sub.add_parser("boxplot", help="random-SNR realizations, DDPM vs uniform per family")
    common(sp, model=True)
    sp.add_argument("--workers", type=int)
    sp = sub.add_parser("baseline-train", help="train the trainable-constellation DNN baseline")
    common(sp)
    sp.add_argument("--snr", type=float, help="training SNR (overrides baseline.snr_db)")
    sp.add_argument("--family", choices=[f.value for f in NoiseFamily], default="gaussian")
    sp = sub.add_parser("inspect", help="summarize a model and/or config")
    common(sp, out=False)
    sp.add_argument("--model", type=Path)
    return p


def _config(args, model_meta: dict | None = None, model=None) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif model_meta and model_meta.get("modulation_order"):
        cfg = ExperimentConfig.for_order(int(model_meta["modulation_order"]))
        cfg.schedule.T = model.T
        for key in ("alpha_first", "alpha_last"):
            if key in model_meta.get("schedule_params", {}):
                setattr(cfg.schedule, key, float(model_meta["schedule_params"][key]))
    else:
        cfg = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.training.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.output.directory = str(args.out)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg.validate()


def _load_model(args):
    model, meta = load_model(args.model)
    cfg = _config(args, meta, model)
    return cfg, model, meta


def _finite(values, what: str) -> None:
    if not all(math.isfinite(v) for v in values):
        raise FloatingPointError(f"non-finite value in {what}")


def cmd_train(args) -> None:
    cfg = _config(args)
    art = run_training(cfg, cfg.output.directory)
    _finite(art.trace, "loss trace")
    tail = art.trace[-1] if art.trace else float("nan")
    flag = " (untrained)" if art.untrained else ""
    print(f"trained {cfg.modulation_order}-QAM T={cfg.schedule.T} for {len(art.trace)} epochs{flag}; "
          f"last loss {tail:.4f}; wrote {art.model_path}")


def cmd_shape(args) -> None:
    cfg, model, meta = _load_model(args)
    from .harness import check_model_matches

    check_model_matches(cfg, model, meta["modulation_order"])
    res = run_shaping(cfg, model, args.snr)
    _finite(res.raw_outputs.ravel(), "denoised samples")
    paths = write_shaping(res, qam_geometry(cfg.modulation_order), cfg.output.directory)
    print(f"SNR {args.snr:g} dB: entropy {entropy(res.distribution):.4f} bits; wrote {paths[0]}")


def cmd_sweep(args) -> None:
    cfg, model, meta = _load_model(args)
    baseline = load_baseline(args.baseline) if args.baseline else None
    report = run_sweep(cfg, model, baseline, model_order=meta["modulation_order"],
                       retrain_baseline_ood=args.retrain_baseline_ood)
    _finite([v for r in report.records for v in (r.mi_bits, r.csim, r.ser)], "sweep metrics")
    paths = emit_report(report, cfg.output.directory, cfg.output.formats)
    print(f"{len(report.records)} records in {report.wall_time_s:.1f}s; wrote {len(paths)} files "
          f"to {cfg.output.directory}")


def cmd_boxplot(args) -> None:
    cfg, model, meta = _load_model(args)
    rows = run_boxplot_experiment(cfg, model, model_order=meta["modulation_order"])
    _finite([v for r in rows for v in (r.mi_bits, r.csim)], "box-plot metrics")
    emit_boxplot(rows, cfg, cfg.training.seed, cfg.output.directory, cfg.output.formats)
    for fam, schemes in summarize_boxplot(rows).items():
        meds = ", ".join(f"{s} MI {v['mi_bits']['median']:.3f} CSIM {v['csim']['median']:.3f}"
                         for s, v in schemes.items())
        print(f"{fam}: {meds}")


def cmd_baseline_train(args) -> None:
    cfg = _config(args)
    b, trace = run_baseline_training(cfg, family=args.family, snr_db=args.snr)
    _finite(trace, "baseline loss trace")
    out = Path(cfg.output.directory)
    save_baseline(b, out / "baseline.json")
    write_loss_trace(trace, out / "baseline_loss_trace.csv")
    print(f"trained {b.order}-QAM baseline at {b.trained_snr_db:g} dB ({b.trained_family}); "
          f"wrote {out / 'baseline.json'}")


def cmd_inspect(args) -> None:
    summary: dict = {}
    if args.model is not None:
        model, meta = load_model(args.model)
        summary["model"] = {"T": model.T, "layer_dims": list(model.layer_dims), "ema_decay": model.ema_decay,
                            "epochs_trained": model.epochs_trained, "has_ema_shadow": model.shadow is not None,
                            "parameters": int(sum(v.size for v in model.params.values())), **meta}
    if args.config is not None or args.model is None:
        cfg = _config(args)
        summary["config"] = cfg.to_dict() | {"config_hash": cfg.digest()}
    print(json.dumps(summary, indent=1, sort_keys=True))


COMMANDS = {"train": cmd_train, "shape": cmd_shape, "sweep": cmd_sweep, "boxplot": cmd_boxplot,
            "baseline-train": cmd_baseline_train, "inspect": cmd_inspect}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with np.errstate(over="raise", invalid="raise"):
            COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # model/config mismatches are configuration problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
