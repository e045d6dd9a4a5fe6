import json

import numpy as np
import pytest

from diffshape import cli
from diffshape.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from diffshape.harness import (BOXPLOT_HEADER, CSV_HEADER, RunReport, emit_boxplot, emit_report,
                               load_model, report_from_dict, report_to_dict, run_baseline_training,
                               run_boxplot_experiment, run_sweep, run_training, substream)

TINY = {
    "modulation_order": 16,
    "schedule": {"T": 20},
    "training": {"epochs": 40, "steps_per_epoch": 2, "hidden": 16, "seed": 5},
    "shaping": {"N_s": 300},
    "evaluation": {"snr_grid_db": [-10, 0, 10], "n_symbols_per_point": 300, "realizations": 4},
    "baseline": {"iterations": 30},
}


@pytest.fixture(scope="module")
def tiny_cfg():
    return config_from_dict(TINY)


@pytest.fixture(scope="module")
def tiny_model(tiny_cfg):
    return run_training(tiny_cfg).model


def test_defaults_per_order():
    c16, c64 = ExperimentConfig.for_order(16), ExperimentConfig.for_order(64)
    assert (c16.schedule.T, c16.training.epochs) == (100, 1000)
    assert (c64.schedule.T, c64.training.epochs) == (200, 5000)
    assert c16.shaping.N_s == 10_000 and c16.evaluation.realizations == 30
    assert c16.evaluation.random_snr_set == [float(s) for s in range(-20, 11)]
    assert config_from_dict({"modulation_order": 64}).schedule.T == 200


@pytest.mark.parametrize("doc, path", [
    ({"training": {"epochs": -1}}, "training.epochs"),
    ({"training": {"epochs": "many"}}, "training.epochs"),
    ({"evaluation": {"snr_grid_db": []}}, "evaluation.snr_grid_db"),
    ({"evaluation": {"noise_families": []}}, "evaluation.noise_families"),
    ({"evaluation": {"noise_families": ["gaussian", "rician"]}}, "evaluation.noise_families[1]"),
    ({"evaluation": {"realizations": 0}}, "evaluation.realizations"),
    ({"schedule": {"T": 1}}, "schedule.T"),
    ({"sampler": {"entry": "middle"}}, "sampler.entry"),
    ({"modulation_order": 32}, "modulation_order"),
    ({"shaping": {"Ns": 3}}, "shaping.Ns"),
    ({"output": {"formats": ["xml"]}}, "output.formats[0]"),
    ({"training": 3}, "training"),
])
def test_config_errors_name_the_field(doc, path):
    with pytest.raises(ConfigError) as err:
        config_from_dict(doc)
    assert err.value.path == path


def test_config_files_yaml_and_json(tmp_path):
    (tmp_path / "c.yaml").write_text("modulation_order: 64\ntraining:\n  epochs: 7\n")
    (tmp_path / "c.json").write_text(json.dumps({"training": {"epochs": 7}}))
    a, b = load_config(tmp_path / "c.yaml"), load_config(tmp_path / "c.json")
    assert a.modulation_order == 64 and a.schedule.T == 200 and a.training.epochs == 7
    assert b.modulation_order == 16 and b.training.epochs == 7
    (tmp_path / "bad.yaml").write_text("training: [unclosed")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")


def test_config_digest_tracks_content():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.digest() == b.digest()
    b.training.seed = 1
    assert a.digest() != b.digest()


def test_substreams():
    a = substream(1, "shape", 0).random(4)
    np.testing.assert_array_equal(a, substream(1, "shape", 0).random(4))
    assert not np.array_equal(a, substream(1, "shape", 1).random(4))
    assert not np.array_equal(a, substream(2, "shape", 0).random(4))
    assert not np.array_equal(a, substream(1, "ddpm", 0).random(4))


def test_training_files_byte_identical(tmp_path, tiny_cfg):
    a = run_training(tiny_cfg, tmp_path / "a")
    b = run_training(tiny_cfg, tmp_path / "b")
    assert a.model_path.read_bytes() == b.model_path.read_bytes()
    assert a.trace_path.read_bytes() == b.trace_path.read_bytes()
    lines = a.trace_path.read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 41
    model, meta = load_model(a.model_path)
    assert model.T == 20 and meta["modulation_order"] == 16 and not meta["untrained"]


def test_zero_epochs_is_flagged(tmp_path):
    cfg = config_from_dict(TINY | {"training": {"epochs": 0, "hidden": 8}})
    art = run_training(cfg, tmp_path)
    assert art.untrained and art.trace == []
    assert json.loads(art.model_path.read_text())["untrained"] is True


def test_sweep_structure_and_report(tmp_path, tiny_cfg, tiny_model):
    base, _ = run_baseline_training(tiny_cfg)
    rep = run_sweep(tiny_cfg, tiny_model, base)
    assert len(rep.records) == 3 * 2 * 3
    keys = {(r.snr_db, r.family, r.scheme) for r in rep.records}
    assert len(keys) == len(rep.records)
    for r in rep.records:
        assert r.mi_bits >= 0 and -1 <= r.csim <= 1 and 0 <= r.ser <= 1
    assert sorted(rep.distributions) == [-10.0, 0.0, 10.0]
    paths = emit_report(rep, tmp_path)
    csv_text = (tmp_path / "report.csv").read_text().splitlines()
    assert csv_text[0] == "snr_db,family,scheme,mi_bits,csim,ser,entropy_bits"
    assert ",".join(CSV_HEADER) == csv_text[0] and len(csv_text) == 19
    dist = (tmp_path / "distributions" / "shaping_snr_m10.csv").read_text().splitlines()
    assert dist[0] == "index,i,q,bits,prob" and len(dist) == 17
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["schema_version"] == 1
    back = report_from_dict(doc)
    assert back.records == rep.records
    assert report_to_dict(back) == doc
    assert len(paths) == 5


def test_sweep_independent_of_worker_count(tmp_path, tiny_cfg, tiny_model):
    emit_report(run_sweep(tiny_cfg, tiny_model, workers=1), tmp_path / "w1")
    emit_report(run_sweep(tiny_cfg, tiny_model, workers=2), tmp_path / "w2")
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w2" / name).read_bytes()


def test_sweep_rejects_mismatch(tiny_cfg, tiny_model):
    with pytest.raises(ValueError):
        run_sweep(config_from_dict(TINY | {"schedule": {"T": 30}}), tiny_model)
    with pytest.raises(ValueError):
        run_sweep(tiny_cfg, tiny_model, model_order=64)


def test_empty_report_refused(tmp_path):
    with pytest.raises(ValueError):
        emit_report(RunReport([], 16), tmp_path)


def test_boxplot_structure_and_determinism(tmp_path, tiny_cfg, tiny_model):
    rows = run_boxplot_experiment(tiny_cfg, tiny_model)
    assert len(rows) == 4 * 3 * 2
    assert {r.snr_db for r in rows} <= set(tiny_cfg.evaluation.random_snr_set)
    again = run_boxplot_experiment(tiny_cfg, tiny_model, workers=2)
    assert rows == again
    emit_boxplot(rows, tiny_cfg, 5, tmp_path)
    assert (tmp_path / "boxplot.csv").read_text().splitlines()[0] == ",".join(BOXPLOT_HEADER)
    summary = json.loads((tmp_path / "boxplot.json").read_text())["summary"]
    assert set(summary) == {"gaussian", "laplacian", "exponential"}


def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "model.json").exists()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"training": {"epochs": -1}}))
    assert cli.main(["train", "--config", str(bad)]) == 1
    assert cli.main(["sweep", "--model", str(tmp_path / "missing.json")]) == 2
    other = tmp_path / "c64.json"
    other.write_text(json.dumps(TINY | {"modulation_order": 64}))
    assert cli.main(["sweep", "--config", str(other), "--model", str(out / "model.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--seed", "-4"])
    assert exc.value.code == 1


def test_cli_numeric_failure(tmp_path, monkeypatch):
    import diffshape.cli as mod

    def boom(*a, **k):
        raise FloatingPointError("non-finite training loss at epoch 1")

    monkeypatch.setattr(mod, "run_training", boom)
    assert mod.main(["train", "--out", str(tmp_path)]) == 3


def test_cli_shape_and_inspect(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(TINY))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["shape", "--model", str(out / "model.json"), "--config", str(cfg),
                     "--snr", "-5", "--out", str(out)]) == 0
    assert (out / "shaping_snr_m5.csv").exists()
    capsys.readouterr()
    assert cli.main(["inspect", "--model", str(out / "model.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"]["T"] == 20 and doc["model"]["modulation_order"] == 16
