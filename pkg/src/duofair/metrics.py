"""Exact fairness and accuracy auditing.

Every quantity here is an exact empirical value (ratios of counts, or plain
means for the score-based ones) computed from prediction/score vectors; the
differentiable training-time counterparts live in the penalties module.
Thresholding is strict throughout: a score of exactly 0 is class 0.

The within-group quantities compare a model against a reference model via the
per-group cross-table a[i, j | z] = Pr{ref = i, model = j | Z = z}, optionally
stratified further by the true label.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._stats import average_ranks, log1pexp, sigmoid
from .errors import DimensionError, GroupError, UndefinedMetricError

TAU_DEFAULT_PAIRS = 50_000


def predictions(scores: np.ndarray) -> np.ndarray:
    """Strict-threshold classifier: 1 iff score > 0."""
    return (np.asarray(scores) > 0).astype(np.int8)


def _check_binary(v: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(v)
    bad = np.setdiff1d(np.unique(v), [0, 1])
    if bad.size:
        raise DimensionError(f"{name} must be 0/1, found {bad.tolist()}")
    return v.astype(np.int8)


def _group_masks(sensitive: np.ndarray):
    z = _check_binary(sensitive, "sensitive")
    g0, g1 = z == 0, z == 1
    if not (g0.any() and g1.any()):
        raise GroupError("both sensitive groups must be present")
    return g0, g1


# ---------------------------------------------------------------------------
# cross-tables


@dataclass(frozen=True)
class CrossTable:
    """Joint reference/model prediction counts per group.

    counts[z, i, j]      : rows with Z = z, reference prediction i, model
                           prediction j.
    by_label[y, z, i, j] : the same further stratified by the true label
                           (present only when labels were supplied).
    """

    counts: np.ndarray
    by_label: np.ndarray | None = None

    def group_total(self, z: int) -> int:
        return int(self.counts[z].sum())

    def rate(self, z: int, i: int, j: int) -> float:
        return float(self.counts[z, i, j]) / self.group_total(z)

    def label_total(self, z: int, y: int) -> int:
        if self.by_label is None:
            raise UndefinedMetricError("cross-table was built without labels")
        return int(self.by_label[y, z].sum())

    def label_rate(self, y: int, z: int, i: int, j: int) -> float | None:
        """a[i, j | z, y], or None when the (z, y) stratum is empty."""
        tot = self.label_total(z, y)
        if tot == 0:
            return None
        return float(self.by_label[y, z, i, j]) / tot

    def ref_positive_rate(self, z: int) -> float:
        return float(self.counts[z, 1, :].sum()) / self.group_total(z)

    def to_dict(self) -> dict:
        out = {"counts": self.counts.tolist()}
        if self.by_label is not None:
            out["by_label"] = self.by_label.tolist()
        return out


def cross_table(ref_preds: np.ndarray, preds: np.ndarray,
                sensitive: np.ndarray, labels: np.ndarray | None = None) -> CrossTable:
    """Tally the per-group reference/model agreement table."""
    ref = _check_binary(ref_preds, "ref_preds")
    pred = _check_binary(preds, "preds")
    _group_masks(sensitive)
    z = np.asarray(sensitive, dtype=np.int64)
    if not (ref.shape == pred.shape == z.shape):
        raise DimensionError("prediction/sensitive vectors must share a length")
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    np.add.at(counts, (z, ref, pred), 1)
    by_label = None
    if labels is not None:
        y = _check_binary(labels, "labels")
        if y.shape != z.shape:
            raise DimensionError("labels length mismatch")
        by_label = np.zeros((2, 2, 2, 2), dtype=np.int64)
        np.add.at(by_label, (y.astype(np.int64), z, ref, pred), 1)
    return CrossTable(counts=counts, by_label=by_label)


# ---------------------------------------------------------------------------
# between-group metrics


class BgfMetrics(NamedTuple):
    di: float
    me: float
    eop: float
    msp: float


def bgf_metrics(scores: np.ndarray, sensitive: np.ndarray,
                labels: np.ndarray) -> BgfMetrics:
    """Demographic disparity, misclassification-error gap, opportunity gap,
    and mean-score disparity, all as absolute between-group differences.

    The opportunity gap is undefined (NaN, with a warning) when either group
    has no positive-label rows.
    """
    scores = np.asarray(scores, dtype=np.float64)
    g0, g1 = _group_masks(sensitive)
    y = _check_binary(labels, "labels")
    pred = predictions(scores)

    di = abs(float(pred[g1].mean()) - float(pred[g0].mean()))
    err = (pred != y)
    me = abs(float(err[g0].mean()) - float(err[g1].mean()))
    pos0, pos1 = g0 & (y == 1), g1 & (y == 1)
    if pos0.any() and pos1.any():
        eop = abs(float(pred[pos1].mean()) - float(pred[pos0].mean()))
    else:
        warnings.warn("opportunity gap undefined: a group has no positive labels")
        eop = math.nan
    sp = sigmoid(scores)
    msp = abs(float(sp[g1].mean()) - float(sp[g0].mean()))
    return BgfMetrics(di=di, me=me, eop=eop, msp=msp)


# ---------------------------------------------------------------------------
# within-group metrics


def wgf_value(ct: CrossTable) -> float:
    """max over groups of min{a[0,1|z], a[1,0|z]}: the smaller of the
    promoted/demoted disagreement masses in the worse group."""
    return max(
        min(ct.rate(z, 0, 1), ct.rate(z, 1, 0)) for z in (0, 1)
    )


def _di_direction(ct: CrossTable) -> tuple:
    """(lo, hi): lo is the group the reference favors less; ties -> group 0."""
    lo = 0 if ct.ref_positive_rate(0) <= ct.ref_positive_rate(1) else 1
    return lo, 1 - lo


def dwgf_value(ct: CrossTable, target: str) -> float:
    """Directed within-group violation for a target disparity notion.

    target 'di' : demotions in the reference's low-rate group and promotions
    in its high-rate group are the harmful directions.
    target 'eop': the same logic restricted to positive-label rows, plus an
    undirected term on negative-label rows. Empty (z, y) strata drop out with
    a warning (their exact mass is zero).
    """
    if target == "di":
        lo, hi = _di_direction(ct)
        return max(ct.rate(lo, 1, 0), ct.rate(hi, 0, 1))
    if target != "eop":
        raise UndefinedMetricError(f"unknown directed target {target!r}")
    if ct.by_label is None:
        raise UndefinedMetricError("directed opportunity needs a label-stratified table")

    def pos_ref_rate(z):
        tot = ct.label_total(z, 1)
        if tot == 0:
            return 0.0
        return float(ct.by_label[1, z, 1, :].sum()) / tot

    lo = 0 if pos_ref_rate(0) <= pos_ref_rate(1) else 1
    hi = 1 - lo
    terms = []
    t_lo = ct.label_rate(1, lo, 1, 0)
    t_hi = ct.label_rate(1, hi, 0, 1)
    for z, t in ((lo, t_lo), (hi, t_hi)):
        if t is None:
            warnings.warn(f"empty (z={z}, y=1) stratum: directed term dropped")
        else:
            terms.append(t)
    for z in (0, 1):
        a10 = ct.label_rate(0, z, 1, 0)
        a01 = ct.label_rate(0, z, 0, 1)
        if a10 is None:
            warnings.warn(f"empty (z={z}, y=0) stratum: undirected term dropped")
            continue
        terms.append(min(a10, a01))
    return max(terms) if terms else 0.0


# ---------------------------------------------------------------------------
# rank agreement


def _concordant_count(f: np.ndarray, g: np.ndarray) -> int:
    """Unordered pairs strictly increasing in both vectors.

    Rows are ordered by (f ascending, g descending); in that order a pair
    i < j is strictly concordant iff g_i < g_j (f-ties land in the same block
    with g descending, so they can never satisfy it). The complement count of
    pairs with g_i >= g_j falls out of a bottom-up mergesort: merging two
    sorted runs A, B costs one searchsorted per run pair.
    """
    m = f.shape[0]
    order = np.lexsort((-g, f))
    cur = g[order].astype(np.float64)
    total = m * (m - 1) // 2
    ge = 0  # pairs i < j with g_i >= g_j
    width = 1
    while width < m:
        nxt = []
        for start in range(0, m, 2 * width):
            a = cur[start: start + width]
            b = cur[start + width: start + 2 * width]
            if b.size:
                # for each b element, count a elements >= it
                ge += int((a.size - np.searchsorted(a, b, side="left")).sum())
                nxt.append(np.sort(np.concatenate([a, b]), kind="mergesort"))
            else:
                nxt.append(a)
        cur = np.concatenate(nxt) if len(nxt) > 1 else nxt[0]
        width *= 2
    return total - ge


def kendall_tau(scores: np.ndarray, ref_scores: np.ndarray, sensitive: np.ndarray,
                mode: str = "exact", pairs: int = TAU_DEFAULT_PAIRS,
                seed: int = 0) -> tuple:
    """Per-group rank agreement (tau_0, tau_1, tau_bar).

    tau_z is the fraction of within-group pairs on which the two score
    vectors agree strictly; tied pairs (in either vector) earn no credit, so
    a vector against itself scores 1 only when its group values are all
    distinct. mode 'exact' counts every unordered pair; mode 'sampled' draws
    `pairs` uniform distinct ordered pairs per group with the given seed
    (group 0 first). Invariant under strictly increasing transforms of
    either argument.
    """
    f = np.asarray(scores, dtype=np.float64)
    g = np.asarray(ref_scores, dtype=np.float64)
    g0, g1 = _group_masks(sensitive)
    if f.shape != g.shape or f.shape != np.asarray(sensitive).shape:
        raise DimensionError("score vectors and sensitive must share a length")
    if mode not in ("exact", "sampled"):
        raise UndefinedMetricError(f"unknown tau mode {mode!r}")
    if mode == "sampled" and pairs < 1:
        raise UndefinedMetricError("sampled mode needs pairs >= 1")

    rng = np.random.default_rng(seed) if mode == "sampled" else None
    taus = []
    for mask in (g0, g1):
        fz, gz = f[mask], g[mask]
        m = fz.shape[0]
        if m < 2:
            raise UndefinedMetricError("a group has fewer than 2 rows; tau undefined")
        if mode == "exact":
            total = m * (m - 1) // 2
            taus.append(_concordant_count(fz, gz) / total)
        else:
            i = rng.integers(0, m, size=pairs)
            j = rng.integers(0, m - 1, size=pairs)
            j = j + (j >= i)
            prod = (fz[i] - fz[j]) * (gz[i] - gz[j])
            taus.append(float(np.mean(prod > 0)))
    tau0, tau1 = taus
    return tau0, tau1, 0.5 * (tau0 + tau1)


# ---------------------------------------------------------------------------
# accuracy family


def accuracy_metrics(scores: np.ndarray, labels: np.ndarray) -> tuple:
    """(accuracy, mean cross-entropy, AUC). AUC uses average ranks (ties get
    half credit) and is undefined for single-class labels."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels, "labels")
    if s.shape != y.shape:
        raise DimensionError("scores/labels length mismatch")
    acc = float(np.mean(predictions(s) == y))
    bce = float(np.mean(log1pexp(s) - y * s))
    n1 = int(y.sum())
    n0 = y.shape[0] - n1
    if n0 == 0 or n1 == 0:
        raise UndefinedMetricError("AUC undefined for single-class labels")
    ranks = average_ranks(s)
    auc = (float(ranks[y == 1].sum()) - n1 * (n1 + 1) / 2.0) / (n1 * n0)
    return acc, bce, auc


# ---------------------------------------------------------------------------
# report


@dataclass
class FairnessReport:
    """One model's complete exact audit against a reference."""

    n: int
    group_sizes: tuple
    acc: float
    bce: float
    auc: float
    di: float
    me: float
    eop: float
    msp: float
    wgf: float
    dwgf_di: float
    dwgf_eop: float
    tau0: float
    tau1: float
    tau_bar: float
    cross: CrossTable
    notes: dict = field(default_factory=dict)

    _SCALARS = ("acc", "bce", "auc", "di", "me", "eop", "msp",
                "wgf", "dwgf_di", "dwgf_eop", "tau0", "tau1", "tau_bar")

    def to_dict(self) -> dict:
        def clean(v):
            return None if (isinstance(v, float) and math.isnan(v)) else v

        out = {"n": self.n, "group_sizes": list(self.group_sizes)}
        for k in self._SCALARS:
            out[k] = clean(getattr(self, k))
        out["cross_table"] = self.cross.to_dict()
        out["notes"] = self.notes
        return out

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def csv_header(cls) -> list:
        return list(cls._SCALARS)

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self._SCALARS]


def build_report(scores: np.ndarray, ref_scores: np.ndarray,
                 sensitive: np.ndarray, labels: np.ndarray,
                 tau_mode: str = "exact", tau_pairs: int = TAU_DEFAULT_PAIRS,
                 tau_seed: int = 0, notes: dict | None = None) -> FairnessReport:
    """Audit `scores` against `ref_scores` on one data part."""
    z = np.asarray(sensitive)
    pred = predictions(scores)
    ref_pred = predictions(ref_scores)
    ct = cross_table(ref_pred, pred, z, labels)
    bgf = bgf_metrics(scores, z, labels)
    acc, bce, auc = accuracy_metrics(np.asarray(scores, dtype=np.float64), labels)
    tau0, tau1, tau_bar = kendall_tau(scores, ref_scores, z, mode=tau_mode,
                                      pairs=tau_pairs, seed=tau_seed)
    return FairnessReport(
        n=int(np.asarray(scores).shape[0]),
        group_sizes=(int(np.sum(z == 0)), int(np.sum(z == 1))),
        acc=acc, bce=bce, auc=auc,
        di=bgf.di, me=bgf.me, eop=bgf.eop, msp=bgf.msp,
        wgf=wgf_value(ct),
        dwgf_di=dwgf_value(ct, "di"),
        dwgf_eop=dwgf_value(ct, "eop"),
        tau0=tau0, tau1=tau1, tau_bar=tau_bar,
        cross=ct,
        notes=dict(notes or {}),
    )
