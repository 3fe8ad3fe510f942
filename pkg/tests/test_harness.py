import csv
import json

import numpy as np
import pytest

from egbench import (
    ConfigError,
    emit_report,
    load_config,
    make_synthetic,
    parse_config,
    run_experiment,
    save_weights,
)
from egbench.cli import main
from egbench.harness import build_model

from conftest import small_net


BASE_DOC = {
    "dataset": {"kind": "synthetic", "seed": 5, "d": 8, "classes": 2,
                "n_per_class": 12, "separation": 6.0},
    "model": {"kind": "fixture", "hidden": [12], "epochs": 40, "lr": 0.3, "seed": 1},
    "attacks": [{"name": "fgs", "norm": "linf", "eps": 0.3}],
    "explainer": {"num_coalitions": 64},
    "runs": 1,
    "seed": 42,
    "workers": 1,
}


def doc(**overrides):
    out = json.loads(json.dumps(BASE_DOC))
    out.update(overrides)
    return out


# ------------------------------------------------------------ config parsing

def test_unknown_top_level_key_rejected():
    with pytest.raises(ConfigError, match="unknown keys.*typo"):
        parse_config(doc(typo=1))


def test_unknown_attack_key_rejected():
    bad = doc(attacks=[{"name": "fgs", "epsilon": 0.3}])
    with pytest.raises(ConfigError, match="epsilon"):
        parse_config(bad)


def test_unknown_attack_name_rejected():
    with pytest.raises(ConfigError, match="unknown attack"):
        parse_config(doc(attacks=[{"name": "deepfool"}]))


def test_missing_required_keys_rejected():
    with pytest.raises(ConfigError, match="missing keys"):
        parse_config({"dataset": BASE_DOC["dataset"]})


def test_referenced_files_must_exist():
    bad = doc(dataset={"kind": "csv", "path": "/nonexistent.csv", "label_column": "y"})
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(bad)
    bad = doc(model={"kind": "weights", "path": "/nonexistent.json"})
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(bad)


def test_invalid_runs_rejected():
    with pytest.raises(ConfigError, match="runs"):
        parse_config(doc(runs=0))


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(BASE_DOC))
    cfg = load_config(path)
    assert cfg.seed == 42
    assert cfg.attacks[0][0] == "fgs"


def test_weights_model_spec_builds(tmp_path):
    ds = make_synthetic(seed=1, d=5, n_per_class=4, classes=2, separation=5.0)
    path = save_weights(small_net(5, 2, seed=3), tmp_path / "w.json")
    model, info = build_model({"kind": "weights", "path": str(path)}, ds)
    assert model.input_dim == 5
    assert info["kind"] == "weights"


# ------------------------------------------------------------ run_experiment

@pytest.fixture(scope="module")
def small_report():
    cfg = parse_config(doc(runs=3, attacks=[{"name": "fgs", "norm": "linf", "eps": 0.3},
                                            {"name": "bim", "norm": "l2", "eps": 0.5,
                                             "iterations": 3, "step_size": 0.2}]))
    return run_experiment(cfg)


def test_report_rates_are_monotone(small_report):
    for block in small_report.attacks:
        assert block["eg_evasion_rate"] >= block["initial_evasion_rate"]
        assert block["rates_vs_total"]["eg"] >= block["rates_vs_total"]["initial"]


def test_report_has_stability_for_multi_run(small_report):
    for block in small_report.attacks:
        assert 0.0 <= block["k_stability"] <= 1.0
        assert 0.0 <= block["kl_stability"] <= 1.0


def test_report_denominators(small_report):
    for block in small_report.attacks:
        denom = block["denominators"]
        assert denom["attacked"] + block["skipped"] == denom["total"]
        assert denom["total"] == 24


def test_single_run_reports_null_stability():
    cfg = parse_config(doc(runs=1))
    report = run_experiment(cfg)
    block = report.attacks[0]
    assert block["k_stability"] is None
    assert block["kl_stability"] is None


def test_run_experiment_deterministic():
    cfg = parse_config(doc())
    a, b = run_experiment(cfg), run_experiment(cfg)

    def canonical(report):
        d = report.to_json_dict()
        for block in d["attacks"]:
            block["per_sample_seconds"] = None
        return json.dumps(d, sort_keys=True)

    assert canonical(a) == canonical(b)


def test_worker_count_does_not_change_results():
    a = run_experiment(parse_config(doc(workers=1)))
    b = run_experiment(parse_config(doc(workers=3)))
    drop_timing = lambda r: [{k: v for k, v in blk.items() if k != "per_sample_seconds"}
                             for blk in r.attacks]
    assert json.dumps(drop_timing(a), sort_keys=True) == \
           json.dumps(drop_timing(b), sort_keys=True)


def test_fixture_accuracy_recorded(small_report):
    assert small_report.config["model"]["train_accuracy"] >= 0.9


def test_errors_attributed_to_sample_and_stage(monkeypatch):
    import egbench.harness as harness

    real_explain = harness.kernel_explain

    def flaky_explain(model, x, y, cfg):
        if float(x.values[0]) == flaky_explain.poison:
            raise RuntimeError("synthetic failure")
        return real_explain(model, x, y, cfg)

    cfg = parse_config(doc())
    dataset = harness.build_dataset(cfg.dataset)
    flaky_explain.poison = float(dataset.X[0, 0])
    monkeypatch.setattr(harness, "kernel_explain", flaky_explain)

    with pytest.raises(harness.ExperimentError, match="sample 0, stage explain"):
        run_experiment(cfg)

    lenient = parse_config(doc(strict=False))
    report = run_experiment(lenient)
    block = report.attacks[0]
    assert len(block["errors"]) == 1
    assert "sample 0" in block["errors"][0]

    monkeypatch.setattr(harness, "kernel_explain", real_explain)
    clean_block = run_experiment(lenient).attacks[0]
    assert block["denominators"]["attacked"] == \
        clean_block["denominators"]["attacked"] - 1  # poisoned sample excluded


# ------------------------------------------------------------ emit_report

def test_emit_report_files(tmp_path, small_report):
    paths = emit_report(small_report, tmp_path / "out")
    parsed = json.loads(paths["report"].read_text())
    assert parsed["version"] == 1
    assert len(parsed["attacks"]) == 2
    for block in parsed["attacks"]:
        for key in ("name", "norm", "eps", "initial_evasion_rate", "eg_evasion_rate",
                    "avg_perturbation_change", "k_stability", "kl_stability",
                    "per_sample_seconds", "skipped", "denominators"):
            assert key in block

    with open(paths["summary"]) as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2
    assert rows[0]["attack"] == "fgs" and rows[1]["attack"] == "bim"

    with open(paths["trace"]) as f:
        trace_rows = list(csv.DictReader(f))
    attacked = parsed["attacks"][0]["denominators"]["attacked"]
    assert len(trace_rows) == 2 * attacked
    assert set(trace_rows[0]) == {"attack", "norm", "sample_index", "baseline_success",
                                  "boost_success", "N_c", "N_nc", "N_baseline", "delta_norm"}


def test_emit_report_is_pure(tmp_path, small_report):
    first = emit_report(small_report, tmp_path / "a")
    second = emit_report(small_report, tmp_path / "b")
    for key in ("report", "summary", "trace"):
        assert first[key].read_bytes() == second[key].read_bytes()


def test_trace_matches_report_perturbation_change(tmp_path, small_report):
    paths = emit_report(small_report, tmp_path / "out")
    parsed = json.loads(paths["report"].read_text())
    with open(paths["trace"]) as f:
        rows = list(csv.DictReader(f))
    for block in parsed["attacks"]:
        terms = [(int(r["N_c"]) - int(r["N_nc"])) / int(r["N_baseline"])
                 for r in rows
                 if r["attack"] == block["name"] and r["norm"] == block["norm"]
                 and int(r["N_baseline"]) > 0]
        assert abs(np.mean(terms) - block["avg_perturbation_change"]) < 1e-12


# ------------------------------------------------------------ cli

def test_cli_run_and_determinism(tmp_path, capsys):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(json.dumps(doc()))
    assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "o1")]) == 0
    assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "o2")]) == 0
    r1 = json.loads((tmp_path / "o1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "o2" / "report.json").read_text())
    for r in (r1, r2):
        for block in r["attacks"]:
            block["per_sample_seconds"] = None
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_cli_attack_subcommand(tmp_path):
    out = tmp_path / "attack-out"
    code = main(["attack", "--attack", "fgs", "--norm", "inf", "--eps", "0.3",
                 "--dataset", "synthetic:d=6,classes=2,n_per_class=8,separation=6.0,seed=2",
                 "--model", "fixture:hidden=8,epochs=30,lr=0.3,seed=1",
                 "--seed", "7", "--runs", "1", "--out", str(out), "--workers", "1"])
    assert code == 0
    assert (out / "report.json").exists()
    assert (out / "summary.csv").exists()
    assert (out / "trace.csv").exists()


def test_cli_oracle_shapley(tmp_path, capsys):
    path = save_weights(small_net(4, 2, seed=9), tmp_path / "w.json")
    code = main(["oracle", "shapley", "--model", str(path),
                 "--dataset", "synthetic:d=4,classes=2,n_per_class=3,seed=1",
                 "--sample-index", "0"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["weights"]) == 4


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc(typo=1)))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    # exact Shapley refuses d > 12 at runtime
    path = save_weights(small_net(14, 2, seed=9), tmp_path / "w.json")
    code = main(["oracle", "shapley", "--model", str(path),
                 "--dataset", "synthetic:d=14,classes=2,n_per_class=3,seed=1",
                 "--sample-index", "0"])
    assert code == 3
