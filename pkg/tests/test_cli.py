"""Command-line interface: config validation, run dirs, audits, repair."""

import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from duofair.cli import main

REPORT_FIELDS = {"n", "group_sizes", "acc", "di", "me", "eop", "msp", "bce",
                 "auc", "tau0", "tau1", "tau_bar", "wgf", "dwgf_di",
                 "dwgf_eop", "cross_table", "notes"}


def _config(outdir, **over):
    cfg = {
        "dataset": {"name": "synthetic", "n": 160, "p": 3,
                    "group_gap": 1.5, "seed": 5},
        "model": "linear",
        "split": {"ratio": 0.75, "seed": 3},
        "optimizer": {"learning_rate": 0.1, "epochs": 300,
                      "momentum": 0.9, "seed": 0},
        "output_dir": str(outdir),
    }
    cfg.update(over)
    return cfg


def _write_config(tmp, cfg, name="config.json"):
    p = tmp / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def train_run(tmp_path_factory):
    """One unconstrained training run shared by the read-only tests."""
    tmp = tmp_path_factory.mktemp("train_run")
    outdir = tmp / "run"
    cfg_path = _write_config(tmp, _config(outdir))
    res = CliRunner().invoke(main, ["train", "--config", cfg_path])
    assert res.exit_code == 0, res.output
    return outdir


# ---------------------------------------------------------------------------
# config validation


def test_unknown_penalty_field_is_an_error(runner, tmp_path):
    cfg = _config(tmp_path / "run", penalty={"lamda": 1.0})
    res = runner.invoke(main, ["train", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "lamda" in res.output and "penalty" in res.output


def test_unknown_top_level_field_is_an_error(runner, tmp_path):
    cfg = _config(tmp_path / "run")
    cfg["outputs_dir"] = cfg.pop("output_dir")
    res = runner.invoke(main, ["train", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "outputs_dir" in res.output


def test_missing_config_file(runner, tmp_path):
    res = runner.invoke(main, ["train", "--config", str(tmp_path / "nope.json")])
    assert res.exit_code == 1
    assert "does not exist" in res.output


def test_malformed_json_config(runner, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    res = runner.invoke(main, ["train", "--config", str(p)])
    assert res.exit_code == 1
    assert "not valid JSON" in res.output


def test_unknown_model_kind(runner, tmp_path):
    cfg = _config(tmp_path / "run", model="tree")
    res = runner.invoke(main, ["train", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "tree" in res.output


def test_output_dir_must_come_from_somewhere(runner, tmp_path):
    cfg = _config(tmp_path / "run")
    del cfg["output_dir"]
    res = runner.invoke(main, ["train", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "output_dir" in res.output
    # the command-line override fills the gap
    res = runner.invoke(main, ["train", "--config", _write_config(tmp_path, cfg),
                               "--output-dir", str(tmp_path / "cli_run")])
    assert res.exit_code == 0
    assert (tmp_path / "cli_run" / "report.json").exists()


# ---------------------------------------------------------------------------
# train


def test_train_writes_a_complete_run_dir(train_run):
    for name in ("config.json", "checkpoint.json", "report.json", "trace.csv",
                 "predictions_train.csv", "predictions_test.csv"):
        assert (train_run / name).exists(), name
    report = json.loads((train_run / "report.json").read_text())
    assert set(report["test"]) == REPORT_FIELDS
    assert set(report["train"]) == REPORT_FIELDS
    for field in ("acc", "di", "me", "msp", "wgf", "dwgf_di", "tau_bar"):
        assert isinstance(report["test"][field], float)
    assert report["model"]["kind"] == "linear"
    assert report["spec"]["lam"] == 0.0


def test_audit_reproduces_the_run_report(runner, train_run):
    res = runner.invoke(main, ["audit", str(train_run / "predictions_test.csv")])
    assert res.exit_code == 0, res.output
    audited = json.loads(res.output)
    stored = json.loads((train_run / "report.json").read_text())["test"]
    for field in REPORT_FIELDS - {"notes"}:
        assert audited[field] == stored[field], field


# ---------------------------------------------------------------------------
# sweep


def test_sweep_single_feasible_cell(runner, tmp_path):
    outdir = tmp_path / "run"
    cfg = _config(outdir,
                  penalty={"bgf": "hinge_di", "epsilon": 0.5},
                  sweep={"lambdas": [0.35], "etas": [0.0]})
    res = runner.invoke(main, ["sweep", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    assert "sweep written" in res.output
    lines = (outdir / "frontier.csv").read_text().strip().splitlines()
    assert len(lines) == 2  # header plus the one cell
    summary = json.loads((outdir / "sweep.json").read_text())
    assert summary["feasible"] is True
    assert summary["selected"]["lambda"] == 0.35
    assert summary["cells"][0]["feasible"] is True


def test_sweep_with_no_feasible_cell_exits_two(runner, tmp_path):
    outdir = tmp_path / "run"
    cfg = _config(outdir,
                  penalty={"bgf": "hinge_di", "epsilon": 1e-6},
                  sweep={"lambdas": [0.0], "etas": [0.0]})
    res = runner.invoke(main, ["sweep", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 2
    assert "no cell met the between-group target" in res.stderr
    summary = json.loads((outdir / "sweep.json").read_text())
    assert summary["feasible"] is False


# ---------------------------------------------------------------------------
# repair


def test_repair_needs_a_method(runner, tmp_path):
    cfg = _config(tmp_path / "run", repair={})
    res = runner.invoke(main, ["repair", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "repair.method" in res.output


def test_repair_rejects_unknown_methods(runner, tmp_path):
    cfg = _config(tmp_path / "run", repair={"method": "resample"})
    res = runner.invoke(main, ["repair", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "resample" in res.output


def test_repair_massaging_audits_against_original_labels(runner, tmp_path):
    outdir = tmp_path / "run"
    cfg = _config(outdir, repair={"method": "massaging"})
    res = runner.invoke(main, ["repair", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    assert "massaging run written" in res.output
    plan = json.loads((outdir / "repair.json").read_text())
    assert plan["method"] == "massaging"
    assert plan["k"] >= 1
    assert plan["truncated"] is False
    preds = pd.read_csv(outdir / "predictions_train.csv")
    sizes = preds["sensitive"].value_counts()
    bound = 1.0 / min(int(sizes[0]), int(sizes[1]))
    assert abs(plan["rates_after"][0] - plan["rates_after"][1]) <= bound + 1e-12
    # the stored train report speaks about the pre-repair labels: an
    # independent audit of the written predictions reproduces it
    audit = runner.invoke(main, ["audit", str(outdir / "predictions_train.csv")])
    assert audit.exit_code == 0
    audited = json.loads(audit.output)
    stored = json.loads((outdir / "report.json").read_text())["train"]
    for field in REPORT_FIELDS - {"notes"}:
        assert audited[field] == stored[field], field


def test_repair_quantile_aligns_group_scores(runner, tmp_path):
    outdir = tmp_path / "run"
    cfg = _config(outdir, repair={"method": "quantile"})
    res = runner.invoke(main, ["repair", "--config", _write_config(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    assert "quantile repair written" in res.output
    info = json.loads((outdir / "repair.json").read_text())
    assert info["method"] == "quantile"
    assert sum(info["weights"]) == pytest.approx(1.0)
    assert len(info["knots_in"]) == 2 and len(info["knots_out"]) == 2
    for knots in info["knots_out"]:
        assert all(a <= b for a, b in zip(knots, knots[1:]))
    assert isinstance(info["reports_repaired"]["train"]["msp"], float)

    reps = pd.read_csv(outdir / "predictions_repaired_train.csv",
                       float_precision="round_trip")
    a = np.sort(reps.loc[reps["sensitive"] == 0, "score"].to_numpy())
    b = np.sort(reps.loc[reps["sensitive"] == 1, "score"].to_numpy())
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    assert float(np.max(np.abs(cdf_a - cdf_b))) <= 2.0 / min(a.size, b.size) + 1e-12
    assert (outdir / "predictions_repaired_test.csv").exists()


# ---------------------------------------------------------------------------
# audit on hand-built files


def test_audit_prediction_only_csv(runner, tmp_path):
    p = tmp_path / "preds.csv"
    pd.DataFrame({
        "pred": [1, 0, 0, 1, 1, 0, 1, 0],
        "ref_pred": [1, 1, 0, 0, 1, 0, 1, 0],
        "sensitive": [0, 0, 0, 0, 1, 1, 1, 1],
        "label": [1, 0, 0, 1, 1, 0, 1, 0],
    }).to_csv(p, index=False)
    res = runner.invoke(main, ["audit", str(p)])
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["acc"] == 1.0
    assert out["di"] == 0.0
    assert out["wgf"] == 0.25  # group 0 swaps one row each way
    assert out["msp"] is None and out["auc"] is None and out["tau_bar"] is None
    assert out["notes"]["scores"] == "absent"


def test_audit_requires_the_id_columns(runner, tmp_path):
    p = tmp_path / "preds.csv"
    pd.DataFrame({"pred": [1, 0], "label": [1, 0]}).to_csv(p, index=False)
    res = runner.invoke(main, ["audit", str(p)])
    assert res.exit_code == 1
    assert "sensitive" in res.output


def test_audit_needs_scores_or_predictions(runner, tmp_path):
    p = tmp_path / "preds.csv"
    pd.DataFrame({"sensitive": [0, 1], "label": [1, 0]}).to_csv(p, index=False)
    res = runner.invoke(main, ["audit", str(p)])
    assert res.exit_code == 1
    assert "needs either" in res.output
