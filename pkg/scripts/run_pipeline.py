"""Train (or reuse) a denoiser and DNN baseline, then run the SNR sweep and the box-plot experiment.

    python scripts/run_pipeline.py --config configs/qam16.yaml
    python scripts/run_pipeline.py --config configs/qam64.yaml --workers 4
"""

import argparse
import time
from pathlib import Path

from diffshape.config import load_config
from diffshape.harness import (emit_boxplot, emit_report, load_model, run_baseline_training,
                               run_boxplot_experiment, run_sweep, run_training, save_baseline,
                               summarize_boxplot, write_loss_trace)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, required=True)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--retrain", action="store_true", help="train even if model.json exists")
    ap.add_argument("--skip-boxplot", action="store_true")
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    out = Path(cfg.output.directory)
    seed = cfg.training.seed

    model_path = out / "model.json"
    t0 = time.perf_counter()
    if model_path.exists() and not args.retrain:
        model, _ = load_model(model_path)
        print(f"reusing {model_path}")
    else:
        model = run_training(cfg, out).model
        print(f"trained denoiser in {time.perf_counter() - t0:.0f}s")

    baseline, trace = run_baseline_training(cfg)
    save_baseline(baseline, out / "baseline.json")
    write_loss_trace(trace, out / "baseline_loss_trace.csv")

    report = run_sweep(cfg, model, baseline, seed=seed, retrain_baseline_ood=True)
    emit_report(report, out, cfg.output.formats)
    print(f"sweep: {len(report.records)} records in {report.wall_time_s:.0f}s")
    families = cfg.evaluation.noise_families
    schemes = sorted({r.scheme for r in report.records})
    for fam in families:
        print(f"\nMI (bits), {fam} noise")
        print("snr_db  " + "  ".join(f"{s:>13}" for s in schemes))
        for snr in cfg.evaluation.snr_grid_db:
            row = {r.scheme: r.mi_bits for r in report.records if r.family == fam and r.snr_db == snr}
            print(f"{snr:6g}  " + "  ".join(f"{row.get(s, float('nan')):13.3f}" for s in schemes))

    if not args.skip_boxplot:
        rows = run_boxplot_experiment(cfg, model, seed=seed)
        emit_boxplot(rows, cfg, seed, out, cfg.output.formats)
        print("\nbox plot medians")
        for fam, by_scheme in summarize_boxplot(rows).items():
            for scheme, stats in by_scheme.items():
                print(f"  {fam:12} {scheme:8} MI {stats['mi_bits']['median']:.3f}  "
                      f"CSIM {stats['csim']['median']:.3f}")


if __name__ == "__main__":
    main()
