"""Full-batch training, penalty weighting, grid sweeps, and run artifacts.

Optimization is plain heavy-ball gradient descent on the composite
objective: cross-entropy plus lam * (between-group surrogate) plus
eta * (within-group surrogate). Zero-weight terms are omitted from the
composite entirely, so a constrained run with lam = eta = 0 performs exactly
the same float operations as an unconstrained run and lands on bit-identical
parameters for the same seed.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .data import Dataset
from .errors import PenaltyConfigError, TrainingDivergedError
from .metrics import (FairnessReport, bgf_metrics, build_report, cross_table,
                      dwgf_value, predictions, wgf_value)
from .models import CrossEntropy, Model, backprop, forward, init, score
from .penalties import (BGF_EXACT_FIELD, WGF_EXACT_FIELD, KendallPenalty,
                        PenaltySpec, ReferenceModel, make_bgf, make_kendall,
                        make_wgf)

LEARNING_RATE_GRID = (0.01, 0.1, 1.0)
EPOCHS_GRID = (10_000, 20_000)
LAMBDA_GRID = (0.0, 0.05, 0.1, 0.35, 0.45, 0.6, 0.75, 1.0, 2.0, 5.0)
ETA_GRID = (0.0, 0.1, 0.5, 1.0, 3.0, 5.0)
KENDALL_PAIRS_DEFAULT = 50_000


@dataclass(frozen=True)
class OptimizerConfig:
    """Heavy-ball full-batch settings. `ridge` regularizes network weights
    only (linear models are never ridge-penalized); `seed` drives parameter
    init and any pair sampling inside penalties."""

    learning_rate: float = 0.1
    epochs: int = 10_000
    momentum: float = 0.9
    ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise PenaltyConfigError("learning_rate must be > 0")
        if self.epochs < 0:
            raise PenaltyConfigError("epochs must be >= 0")
        if not (0.0 <= self.momentum < 1.0):
            raise PenaltyConfigError("momentum must be in [0, 1)")
        if self.ridge < 0:
            raise PenaltyConfigError("ridge must be >= 0")
        if self.seed < 0:
            raise PenaltyConfigError("seed must be >= 0")


@dataclass(frozen=True)
class SweepGrid:
    lambdas: tuple = LAMBDA_GRID
    etas: tuple = ETA_GRID

    def __post_init__(self):
        if not self.lambdas or not self.etas:
            raise PenaltyConfigError("sweep grid must be non-empty")
        if any(v < 0 for v in self.lambdas) or any(v < 0 for v in self.etas):
            raise PenaltyConfigError("grid weights must be >= 0")


@dataclass
class TracePoint:
    epoch: int
    loss: float
    bgf_surr: float
    wgf_surr: float
    exact_bgf: float
    exact_wgf: float


@dataclass
class RunResult:
    """Everything a finished run exposes. Reports are exact audits of the
    final model (train side against the reference's cached behaviour, test
    side against the reference evaluated there)."""

    kind: str
    model: Model
    spec: PenaltySpec
    opt: OptimizerConfig
    trace: list
    report_train: FairnessReport
    report_test: FairnessReport | None
    surrogates: dict = field(default_factory=dict)


def _trace_stride(epochs: int) -> int:
    return max(1, epochs // 100)


def _exact_bgf_value(bgf_kind: str, scores, ds: Dataset) -> float:
    fieldname = BGF_EXACT_FIELD.get(bgf_kind)
    if fieldname is None:
        return math.nan
    m = bgf_metrics(scores, ds.sensitive, ds.labels)
    return getattr(m, fieldname)


def _exact_wgf_value(wgf_kind: str, scores, ref: ReferenceModel, ds: Dataset,
                     kendall_term: KendallPenalty | None) -> float:
    if wgf_kind == "none":
        return math.nan
    if wgf_kind == "kendall":
        return 1.0 - kendall_term.pair_tau_bar(scores)
    ct = cross_table(ref.preds, predictions(scores), ds.sensitive, ds.labels)
    if wgf_kind == "undirected":
        return wgf_value(ct)
    return dwgf_value(ct, "di" if wgf_kind == "directed_di" else "eop")


def _gd(kind: str, p: int, X: np.ndarray, params0: np.ndarray, terms: list,
        opt: OptimizerConfig, use_ridge: bool, trace_fn) -> tuple:
    """The inner loop. `terms` is a list of (name, weight, objective); the
    trace callback sees (epoch, scores, loss, per-term values) at the trace
    stride and at the final epoch."""
    params = params0.copy()
    velocity = np.zeros_like(params)
    trace: list = []
    stride = _trace_stride(opt.epochs)
    for epoch in range(opt.epochs):
        scores, cache = forward(kind, p, params, X)
        loss = 0.0
        dscores = np.zeros_like(scores)
        term_values = {}
        for name, weight, obj in terms:
            v, dv = obj.value_and_grad(scores)
            term_values[name] = v
            loss += weight * v
            dscores += weight * dv
        grad = backprop(kind, p, params, X, dscores, cache)
        if use_ridge:
            loss += 0.5 * opt.ridge * float(params @ params)
            grad = grad + opt.ridge * params
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDivergedError(epoch)
        if trace_fn is not None and (epoch % stride == 0 or epoch == opt.epochs - 1):
            trace.append(trace_fn(epoch, scores, loss, term_values))
        velocity = opt.momentum * velocity - opt.learning_rate * grad
        params = params + velocity
    return params, trace


def audit_model(model: Model, ref: ReferenceModel, ds: Dataset, part: str) -> FairnessReport:
    s = score(model, ds.features)
    ref_s = ref.scores if part == "train" else score(ref.model, ds.features)
    notes = {"part": part}
    for key in ("dataset", "sensitive_mapping", "label_mapping"):
        if key in ds.meta:
            notes[key] = ds.meta[key]
    if model.kind == "mlp":
        notes["hidden_activation"] = "relu"
    return build_report(s, ref_s, ds.sensitive, ds.labels, notes=notes)


def train_constrained(kind: str, train: Dataset, ref: ReferenceModel,
                      spec: PenaltySpec, opt: OptimizerConfig,
                      test: Dataset | None = None,
                      kendall_pairs: int | None = KENDALL_PAIRS_DEFAULT) -> RunResult:
    """Train under the composite objective from a fresh seeded init.

    The reference model supplies the within-group targets and stays fixed.
    Surrogate objective instances are built for the configured kinds even at
    zero weight (their final values feed sweep frontiers), but only positive
    weights enter the optimized composite.
    """
    bgf_obj = make_bgf(spec.bgf, train)
    kendall_term = None
    if spec.wgf == "kendall":
        kendall_term = make_kendall(ref, train, kendall_pairs, opt.seed)
        wgf_obj: object | None = kendall_term
    else:
        wgf_obj = make_wgf(spec.wgf, ref, train)

    terms = [("cross_entropy", 1.0, CrossEntropy(train.labels.astype(np.float64)))]
    if bgf_obj is not None and spec.lam > 0:
        terms.append((spec.bgf, spec.lam, bgf_obj))
    if wgf_obj is not None and spec.eta > 0:
        terms.append((spec.wgf, spec.eta, wgf_obj))

    def trace_fn(epoch, scores, loss, term_values):
        bs = term_values.get(spec.bgf)
        if bs is None:
            bs = bgf_obj.value(scores) if bgf_obj is not None else math.nan
        ws = term_values.get(spec.wgf)
        if ws is None:
            ws = wgf_obj.value(scores) if wgf_obj is not None else math.nan
        return TracePoint(
            epoch=epoch, loss=loss, bgf_surr=bs, wgf_surr=ws,
            exact_bgf=_exact_bgf_value(spec.bgf, scores, train),
            exact_wgf=_exact_wgf_value(spec.wgf, scores, ref, train, kendall_term),
        )

    model0 = init(kind, train.p, opt.seed)
    params, trace = _gd(kind, train.p, train.features, model0.params, terms,
                        opt, use_ridge=(kind == "mlp" and opt.ridge > 0),
                        trace_fn=trace_fn)
    model = model0.replace_params(params)

    final_scores = score(model, train.features)
    surrogates = {
        "bgf_surr": bgf_obj.value(final_scores) if bgf_obj is not None else math.nan,
        "wgf_surr": wgf_obj.value(final_scores) if wgf_obj is not None else math.nan,
    }
    return RunResult(
        kind=kind, model=model, spec=spec, opt=opt, trace=trace,
        report_train=audit_model(model, ref, train, "train"),
        report_test=None if test is None else audit_model(model, ref, test, "test"),
        surrogates=surrogates,
    )


def train_unconstrained(kind: str, train: Dataset, opt: OptimizerConfig,
                        test: Dataset | None = None) -> RunResult:
    """Plain cross-entropy training; the resulting model audits against
    itself, so its within-group numbers are trivially zero."""
    terms = [("cross_entropy", 1.0, CrossEntropy(train.labels.astype(np.float64)))]

    def trace_fn(epoch, scores, loss, term_values):
        return TracePoint(epoch=epoch, loss=loss, bgf_surr=math.nan,
                          wgf_surr=math.nan, exact_bgf=math.nan,
                          exact_wgf=math.nan)

    model0 = init(kind, train.p, opt.seed)
    params, trace = _gd(kind, train.p, train.features, model0.params, terms,
                        opt, use_ridge=(kind == "mlp" and opt.ridge > 0),
                        trace_fn=trace_fn)
    model = model0.replace_params(params)
    ref = ReferenceModel.build(model, train)
    return RunResult(
        kind=kind, model=model, spec=PenaltySpec(), opt=opt, trace=trace,
        report_train=audit_model(model, ref, train, "train"),
        report_test=None if test is None else audit_model(model, ref, test, "test"),
        surrogates={"bgf_surr": math.nan, "wgf_surr": math.nan},
    )


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class CellSummary:
    lam: float
    eta: float
    acc: float
    bgf_exact: float
    wgf_exact: float
    bgf_surr: float
    wgf_surr: float
    feasible: bool
    delta_met: bool
    result: RunResult


@dataclass
class SweepResult:
    cells: list
    selected: CellSummary
    feasible: bool


def _cell_exacts(result: RunResult) -> tuple:
    """Exact (bgf, wgf) for selection, read from the test report."""
    rep = result.report_test if result.report_test is not None else result.report_train
    spec = result.spec
    bf = BGF_EXACT_FIELD.get(spec.bgf)
    bgf_exact = getattr(rep, bf) if bf else math.nan
    wf = WGF_EXACT_FIELD.get(spec.wgf)
    if wf is None:
        wgf_exact = math.nan
    elif wf == "one_minus_tau_bar":
        wgf_exact = 1.0 - rep.tau_bar
    else:
        wgf_exact = getattr(rep, wf)
    return bgf_exact, wgf_exact


def _summarize(result: RunResult) -> CellSummary:
    rep = result.report_test if result.report_test is not None else result.report_train
    bgf_exact, wgf_exact = _cell_exacts(result)
    spec = result.spec
    feasible = True if math.isnan(bgf_exact) else bgf_exact <= spec.epsilon
    delta_met = (not math.isnan(wgf_exact)) and wgf_exact <= spec.delta
    return CellSummary(
        lam=spec.lam, eta=spec.eta, acc=rep.acc,
        bgf_exact=bgf_exact, wgf_exact=wgf_exact,
        bgf_surr=result.surrogates.get("bgf_surr", math.nan),
        wgf_surr=result.surrogates.get("wgf_surr", math.nan),
        feasible=feasible, delta_met=delta_met, result=result,
    )


def _selection_key(cell: CellSummary) -> tuple:
    wx = cell.wgf_exact
    if math.isnan(wx):
        wx = math.inf
    return (wx, -cell.acc, cell.eta, cell.lam)


def _run_cell(payload) -> RunResult:
    kind, train, ref, spec, opt, test, kendall_pairs = payload
    return train_constrained(kind, train, ref, spec, opt, test=test,
                             kendall_pairs=kendall_pairs)


def select_cell(cells: list) -> tuple:
    """Apply the sweep selection rule to summarized cells.

    Among feasible cells (exact between-group value within epsilon) the
    smallest exact within-group value wins; ties break toward higher
    accuracy, then smaller eta, then smaller lam. With no feasible cell the
    closest-to-epsilon cell is returned with feasible=False.
    """
    feasible_cells = [c for c in cells if c.feasible]
    if feasible_cells:
        return min(feasible_cells, key=_selection_key), True
    closest = min(
        cells,
        key=lambda c: (math.inf if math.isnan(c.bgf_exact) else c.bgf_exact,)
        + _selection_key(c),
    )
    return closest, False


def sweep(kind: str, train: Dataset, test: Dataset, ref: ReferenceModel,
          spec: PenaltySpec, grid: SweepGrid, opt: OptimizerConfig,
          jobs: int = 1,
          kendall_pairs: int | None = KENDALL_PAIRS_DEFAULT) -> SweepResult:
    """Train every (lam, eta) cell and select the winner.

    Selection: among cells whose exact between-group metric on the test side
    is within spec.epsilon, the smallest exact within-group value wins; ties
    break toward higher accuracy, then smaller eta, then smaller lam. If no
    cell is feasible the closest-to-epsilon cell is returned flagged
    infeasible.
    """
    payloads = []
    for lam in grid.lambdas:
        for eta in grid.etas:
            cell_spec = replace(spec, lam=lam, eta=eta)
            payloads.append((kind, train, ref, cell_spec, opt, test, kendall_pairs))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_cell, payloads))
    else:
        results = [_run_cell(p) for p in payloads]
    cells = [_summarize(r) for r in results]
    selected, feasible = select_cell(cells)
    return SweepResult(cells=cells, selected=selected, feasible=feasible)


# ---------------------------------------------------------------------------
# run artifacts


FRONTIER_COLUMNS = ["lambda", "eta", "acc", "bgf_exact", "wgf_exact",
                    "bgf_surr", "wgf_surr"]


def _predictions_frame(model: Model, ref: ReferenceModel, ds: Dataset,
                       part: str) -> pd.DataFrame:
    s = score(model, ds.features)
    ref_s = ref.scores if part == "train" else score(ref.model, ds.features)
    return pd.DataFrame({
        "score": s,
        "ref_score": ref_s,
        "pred": predictions(s),
        "ref_pred": predictions(ref_s),
        "sensitive": ds.sensitive.astype(int),
        "label": ds.labels.astype(int),
    })


def write_run_dir(outdir: str | Path, config: dict, result: RunResult,
                  train: Dataset | None = None, test: Dataset | None = None,
                  ref: ReferenceModel | None = None,
                  sweep_result: SweepResult | None = None) -> Path:
    """Materialize a run: config echo, checkpoint, reports, trace, and (when
    the datasets are provided) per-row predictions; sweeps add frontier.csv
    and a selection summary."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    (outdir / "config.json").write_text(json.dumps(config, indent=2))
    checkpoint = {
        "kind": result.kind,
        "p": result.model.p,
        "params": [float(v) for v in result.model.params],
    }
    (outdir / "checkpoint.json").write_text(json.dumps(checkpoint))

    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    report = {
        "spec": asdict(result.spec),
        "optimizer": asdict(result.opt),
        "model": {"kind": result.kind,
                  "hidden_activation": "relu" if result.kind == "mlp" else None},
        "surrogates_train": {k: clean(v) for k, v in result.surrogates.items()},
        "train": result.report_train.to_dict(),
        "test": None if result.report_test is None else result.report_test.to_dict(),
    }
    (outdir / "report.json").write_text(json.dumps(report, indent=2))

    with (outdir / "trace.csv").open("w") as fh:
        fh.write("epoch,loss,bgf_surr,wgf_surr,exact_bgf,exact_wgf\n")
        for t in result.trace:
            fh.write(f"{t.epoch},{t.loss:.17g},{t.bgf_surr:.17g},"
                     f"{t.wgf_surr:.17g},{t.exact_bgf:.17g},{t.exact_wgf:.17g}\n")

    if ref is not None:
        if train is not None:
            _predictions_frame(result.model, ref, train, "train").to_csv(
                outdir / "predictions_train.csv", index=False, float_format="%.17g")
        if test is not None:
            _predictions_frame(result.model, ref, test, "test").to_csv(
                outdir / "predictions_test.csv", index=False, float_format="%.17g")

    if sweep_result is not None:
        rows = []
        for c in sweep_result.cells:
            rows.append([c.lam, c.eta, c.acc, c.bgf_exact, c.wgf_exact,
                         c.bgf_surr, c.wgf_surr])
        pd.DataFrame(rows, columns=FRONTIER_COLUMNS).to_csv(
            outdir / "frontier.csv", index=False, float_format="%.17g")
        summary = {
            "feasible": sweep_result.feasible,
            "selected": {"lambda": sweep_result.selected.lam,
                         "eta": sweep_result.selected.eta,
                         "acc": clean(sweep_result.selected.acc),
                         "bgf_exact": clean(sweep_result.selected.bgf_exact),
                         "wgf_exact": clean(sweep_result.selected.wgf_exact),
                         "delta_met": sweep_result.selected.delta_met},
            "cells": [
                {"lambda": c.lam, "eta": c.eta, "acc": clean(c.acc),
                 "bgf_exact": clean(c.bgf_exact), "wgf_exact": clean(c.wgf_exact),
                 "feasible": c.feasible, "delta_met": c.delta_met}
                for c in sweep_result.cells
            ],
        }
        (outdir / "sweep.json").write_text(json.dumps(summary, indent=2))
    return outdir


def read_checkpoint(path: str | Path) -> Model:
    data = json.loads(Path(path).read_text())
    return Model(kind=data["kind"], p=int(data["p"]),
                 params=np.asarray(data["params"], dtype=np.float64))
