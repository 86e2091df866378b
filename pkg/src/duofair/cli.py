"""Command-line entry points: train, sweep, audit, repair.

Runs are described by a JSON config file; every field is validated strictly
(an unknown or misspelled key is an error, not a silent default). Exit codes:
0 success, 1 bad config/data, 2 a sweep finished but no cell met its
between-group target.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from .data import (Dataset, SplitSpec, load_dataset, load_saved_dataset,
                   make_synthetic, split)
from .errors import ConfigError, DuofairError
from .metrics import bgf_metrics, build_report, cross_table, dwgf_value, predictions, wgf_value
from .models import KINDS, score as model_score
from .penalties import PenaltySpec, ReferenceModel
from .repair import fit_quantile_repair, massage
from .training import (KENDALL_PAIRS_DEFAULT, OptimizerConfig, SweepGrid,
                       audit_model, sweep, train_constrained,
                       train_unconstrained, write_run_dir)

_TOP_KEYS = {"dataset", "model", "split", "penalty", "optimizer", "sweep",
             "repair", "kendall_pairs", "output_dir"}
_DATASET_KEYS = {"name", "path", "n", "p", "group_gap", "seed"}
_SPLIT_KEYS = {"mode", "ratio", "repeats", "seed", "repeat_index"}
_PENALTY_KEYS = {"bgf", "wgf", "lambda", "eta", "epsilon", "delta"}
_OPT_KEYS = {"learning_rate", "epochs", "momentum", "ridge", "seed"}
_SWEEP_KEYS = {"lambdas", "etas"}
_REPAIR_KEYS = {"method"}


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown field {k!r} in {where}")


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    _check_keys(cfg, _TOP_KEYS, "config")
    if "dataset" not in cfg:
        raise ConfigError("config needs a 'dataset' section")
    _check_keys(cfg["dataset"], _DATASET_KEYS, "dataset")
    for section, keys in (("split", _SPLIT_KEYS), ("penalty", _PENALTY_KEYS),
                          ("optimizer", _OPT_KEYS), ("sweep", _SWEEP_KEYS),
                          ("repair", _REPAIR_KEYS)):
        if section in cfg:
            _check_keys(cfg[section], keys, section)
    return cfg


def _build_dataset(cfg: dict) -> Dataset:
    d = cfg["dataset"]
    name = d.get("name")
    if name == "synthetic":
        for k in ("n", "p", "group_gap", "seed"):
            if k not in d:
                raise ConfigError(f"synthetic dataset needs field {k!r}")
        return make_synthetic(int(d["n"]), int(d["p"]), float(d["group_gap"]),
                              int(d["seed"]))
    if name == "saved":
        if "path" not in d:
            raise ConfigError("saved dataset needs a 'path'")
        return load_saved_dataset(d["path"])
    if "path" not in d:
        raise ConfigError(f"dataset {name!r} needs a 'path'")
    return load_dataset(name, d["path"])


def _build_split(cfg: dict) -> tuple:
    s = cfg.get("split", {})
    spec = SplitSpec(
        mode=s.get("mode", "random_ratio"),
        ratio=float(s.get("ratio", 0.8)),
        repeats=int(s.get("repeats", 1)),
        seed=int(s.get("seed", 0)),
    )
    return spec, int(s.get("repeat_index", 0))


def _build_spec(cfg: dict) -> PenaltySpec:
    p = cfg.get("penalty", {})
    return PenaltySpec(
        bgf=p.get("bgf", "none"),
        wgf=p.get("wgf", "none"),
        lam=float(p.get("lambda", 0.0)),
        eta=float(p.get("eta", 0.0)),
        epsilon=float(p.get("epsilon", 0.03)),
        delta=float(p.get("delta", 0.01)),
    )


def _build_opt(cfg: dict, seed_override: int | None = None) -> OptimizerConfig:
    o = cfg.get("optimizer", {})
    return OptimizerConfig(
        learning_rate=float(o.get("learning_rate", 0.1)),
        epochs=int(o.get("epochs", 10_000)),
        momentum=float(o.get("momentum", 0.9)),
        ridge=float(o.get("ridge", 1e-6)),
        seed=int(o.get("seed", 0)) if seed_override is None else seed_override,
    )


def _model_kind(cfg: dict) -> str:
    kind = cfg.get("model", "linear")
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    return kind


def _output_dir(cfg: dict, override: str | None) -> Path:
    out = override or cfg.get("output_dir")
    if not out:
        raise ConfigError("config needs an 'output_dir' (or pass --output-dir)")
    return Path(out)


def _prepare(cfg: dict, seed_override=None, output_override=None):
    ds = _build_dataset(cfg)
    split_spec, repeat_index = _build_split(cfg)
    train, test = split(ds, split_spec, repeat_index)
    return {
        "kind": _model_kind(cfg),
        "train": train,
        "test": test,
        "spec": _build_spec(cfg),
        "opt": _build_opt(cfg, seed_override),
        "kendall_pairs": int(cfg.get("kendall_pairs", KENDALL_PAIRS_DEFAULT)),
        "outdir": _output_dir(cfg, output_override),
    }


def _echo_report(result, label: str):
    rep = result.report_test if result.report_test is not None else result.report_train
    click.echo(
        f"{label}: acc={rep.acc:.4f} di={rep.di:.4f} me={rep.me:.4f} "
        f"eop={rep.eop:.4f} msp={rep.msp:.4f} wgf={rep.wgf:.5f} "
        f"dwgf_di={rep.dwgf_di:.5f} tau_bar={rep.tau_bar:.4f}"
    )


def cmd_train(config_path: str, seed: int | None = None,
              output_dir: str | None = None) -> int:
    cfg = load_config(config_path)
    b = _prepare(cfg, seed, output_dir)
    spec = b["spec"]
    base = train_unconstrained(b["kind"], b["train"], b["opt"], test=b["test"])
    unconstrained = (spec.bgf == "none" and spec.wgf == "none"
                     and spec.lam == 0 and spec.eta == 0)
    if unconstrained:
        result = base
        ref = ReferenceModel.build(base.model, b["train"])
    else:
        ref = ReferenceModel.build(base.model, b["train"])
        result = train_constrained(b["kind"], b["train"], ref, spec, b["opt"],
                                   test=b["test"],
                                   kendall_pairs=b["kendall_pairs"])
    write_run_dir(b["outdir"], cfg, result, train=b["train"], test=b["test"],
                  ref=ref)
    _echo_report(result, "test" if result.report_test is not None else "train")
    click.echo(f"run written to {b['outdir']}")
    return 0


def cmd_sweep(config_path: str, jobs: int = 1,
              output_dir: str | None = None) -> int:
    cfg = load_config(config_path)
    b = _prepare(cfg, None, output_dir)
    sw_cfg = cfg.get("sweep", {})
    grid = SweepGrid(
        lambdas=tuple(sw_cfg["lambdas"]) if "lambdas" in sw_cfg else SweepGrid().lambdas,
        etas=tuple(sw_cfg["etas"]) if "etas" in sw_cfg else SweepGrid().etas,
    )
    base = train_unconstrained(b["kind"], b["train"], b["opt"], test=b["test"])
    ref = ReferenceModel.build(base.model, b["train"])
    sw = sweep(b["kind"], b["train"], b["test"], ref, b["spec"], grid, b["opt"],
               jobs=jobs, kendall_pairs=b["kendall_pairs"])
    write_run_dir(b["outdir"], cfg, sw.selected.result, train=b["train"],
                  test=b["test"], ref=ref, sweep_result=sw)
    for c in sw.cells:
        tag = "*" if c is sw.selected else " "
        click.echo(
            f"{tag} lambda={c.lam:<5g} eta={c.eta:<5g} acc={c.acc:.4f} "
            f"bgf={c.bgf_exact:.4f} wgf={c.wgf_exact:.5f} feasible={c.feasible}"
        )
    if not sw.feasible:
        click.echo("no cell met the between-group target; closest cell selected",
                   err=True)
        return 2
    click.echo(f"sweep written to {b['outdir']}")
    return 0


def cmd_repair(config_path: str, output_dir: str | None = None) -> int:
    cfg = load_config(config_path)
    if "repair" not in cfg or "method" not in cfg["repair"]:
        raise ConfigError("repair runs need a repair.method field")
    method = cfg["repair"]["method"]
    b = _prepare(cfg, None, output_dir)
    base = train_unconstrained(b["kind"], b["train"], b["opt"], test=b["test"])
    ref = ReferenceModel.build(base.model, b["train"])
    outdir = b["outdir"]

    if method == "massaging":
        repaired, plan = massage(b["train"], base.model)
        result = train_constrained(b["kind"], repaired, ref, b["spec"], b["opt"],
                                   test=b["test"],
                                   kendall_pairs=b["kendall_pairs"])
        # audits must speak about the real labels, not the massaged ones
        result.report_train = audit_model(result.model, ref, b["train"], "train")
        write_run_dir(outdir, cfg, result, train=b["train"], test=b["test"],
                      ref=ref)
        (outdir / "repair.json").write_text(json.dumps({
            "method": "massaging",
            "k": plan.k,
            "promote_group": plan.promote_group,
            "demote_group": plan.demote_group,
            "rates_before": list(plan.rates_before),
            "rates_after": list(plan.rates_after),
            "truncated": plan.truncated,
        }, indent=2))
        _echo_report(result, "test")
        click.echo(f"massaging run written to {outdir} (k={plan.k})")
        return 0

    if method == "quantile":
        spec = b["spec"]
        if spec.lam > 0 or spec.eta > 0:
            result = train_constrained(b["kind"], b["train"], ref, spec, b["opt"],
                                       test=b["test"],
                                       kendall_pairs=b["kendall_pairs"])
            model = result.model
        else:
            result = base
            model = base.model
        train_scores = model_score(model, b["train"].features)
        qm = fit_quantile_repair(train_scores, b["train"].sensitive)
        write_run_dir(outdir, cfg, result, train=b["train"], test=b["test"],
                      ref=ref)
        reports = {}
        for part_name, part in (("train", b["train"]), ("test", b["test"])):
            raw = model_score(model, part.features)
            rep_scores = qm.apply(raw, part.sensitive)
            ref_scores = ref.scores if part_name == "train" else \
                model_score(ref.model, part.features)
            rep = build_report(rep_scores, ref_scores, part.sensitive,
                               part.labels, notes={"part": part_name,
                                                   "repair": "quantile"})
            reports[part_name] = rep.to_dict()
            pd.DataFrame({
                "score": rep_scores,
                "ref_score": ref_scores,
                "pred": predictions(rep_scores),
                "ref_pred": predictions(ref_scores),
                "sensitive": part.sensitive.astype(int),
                "label": part.labels.astype(int),
            }).to_csv(outdir / f"predictions_repaired_{part_name}.csv",
                      index=False, float_format="%.17g")
        (outdir / "repair.json").write_text(json.dumps({
            "method": "quantile",
            "weights": list(qm.weights),
            "knots_in": [list(map(float, k)) for k in qm.knots_in],
            "knots_out": [list(map(float, k)) for k in qm.knots_out],
            "reports_repaired": reports,
        }, indent=2))
        click.echo(f"quantile repair written to {outdir}")
        return 0

    raise ConfigError(f"unknown repair method {method!r}")


def cmd_audit(predictions_csv: str, sensitive_col: str = "sensitive",
              label_col: str = "label", score_col: str = "score",
              ref_score_col: str = "ref_score", pred_col: str = "pred",
              ref_pred_col: str = "ref_pred") -> int:
    p = Path(predictions_csv)
    if not p.exists():
        raise ConfigError(f"{p} does not exist")
    df = pd.read_csv(p, float_precision="round_trip")
    for col in (sensitive_col, label_col):
        if col not in df.columns:
            raise ConfigError(f"{p} has no column {col!r}")
    z = df[sensitive_col].to_numpy()
    y = df[label_col].to_numpy()

    if score_col in df.columns and ref_score_col in df.columns:
        rep = build_report(df[score_col].to_numpy(dtype=np.float64),
                           df[ref_score_col].to_numpy(dtype=np.float64),
                           z, y, notes={"source": str(p)})
        click.echo(rep.to_json())
        return 0

    if pred_col in df.columns and ref_pred_col in df.columns:
        # prediction-only audit: count metrics are available, score metrics not
        pred = df[pred_col].to_numpy(dtype=np.float64)
        ref_pred = df[ref_pred_col].to_numpy(dtype=np.float64)
        ct = cross_table(ref_pred.astype(int), pred.astype(int), z, y)
        m = bgf_metrics(pred, z, y)
        out = {
            "n": int(len(df)),
            "acc": float(np.mean((pred > 0) == (y == 1))),
            "di": m.di, "me": m.me,
            "eop": None if math.isnan(m.eop) else m.eop,
            "msp": None, "bce": None, "auc": None,
            "tau0": None, "tau1": None, "tau_bar": None,
            "wgf": wgf_value(ct),
            "dwgf_di": dwgf_value(ct, "di"),
            "dwgf_eop": dwgf_value(ct, "eop"),
            "cross_table": ct.to_dict(),
            "notes": {"source": str(p), "scores": "absent"},
        }
        click.echo(json.dumps(out, indent=2))
        return 0

    raise ConfigError(
        f"{p} needs either ({score_col!r}, {ref_score_col!r}) or "
        f"({pred_col!r}, {ref_pred_col!r}) columns"
    )


# ---------------------------------------------------------------------------
# click wiring


@click.group()
def main():
    """Fairness-constrained training and auditing."""


def _run(fn, *args, **kwargs) -> int:
    try:
        return fn(*args, **kwargs)
    except DuofairError as e:
        click.echo(f"error: {e}", err=True)
        return 1


@main.command("train")
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="JSON run config")
@click.option("--seed", type=int, default=None, help="override optimizer seed")
@click.option("--output-dir", default=None, help="override output directory")
def train_command(config_path, seed, output_dir):
    """Train one model (unconstrained or penalized) and write a run dir."""
    sys.exit(_run(cmd_train, config_path, seed, output_dir))


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", type=int, default=1, help="parallel worker processes")
@click.option("--output-dir", default=None)
def sweep_command(config_path, jobs, output_dir):
    """Train a (lambda, eta) grid, write the frontier and the selected cell."""
    sys.exit(_run(cmd_sweep, config_path, jobs, output_dir))


@main.command("audit")
@click.argument("predictions_csv", type=click.Path())
@click.option("--sensitive-col", default="sensitive")
@click.option("--label-col", default="label")
@click.option("--score-col", default="score")
@click.option("--ref-score-col", default="ref_score")
@click.option("--pred-col", default="pred")
@click.option("--ref-pred-col", default="ref_pred")
def audit_command(predictions_csv, sensitive_col, label_col, score_col,
                  ref_score_col, pred_col, ref_pred_col):
    """Exact fairness audit of a predictions CSV, printed as JSON."""
    sys.exit(_run(cmd_audit, predictions_csv, sensitive_col, label_col,
                  score_col, ref_score_col, pred_col, ref_pred_col))


@main.command("repair")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--output-dir", default=None)
def repair_command(config_path, output_dir):
    """Massaging or quantile repair plus the configured training run."""
    sys.exit(_run(cmd_repair, config_path, output_dir))


if __name__ == "__main__":
    main()
