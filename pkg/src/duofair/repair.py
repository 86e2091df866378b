"""Data and score repair mechanisms.

Two pre/post-processing routes to between-group parity that pair with the
within-group penalties: massaging flips the smallest sufficient number of
training labels (guided by a ranker) to equalize group positive rates, and
quantile repair maps each group's scores onto the weighted average of the two
group quantile functions, aligning the score distributions while preserving
within-group order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import GroupError, RepairError
from .models import Model, score


@dataclass(frozen=True)
class MassagingPlan:
    """What a massaging pass did: which group was promoted, how many labels
    moved on each side, and the group positive rates before/after."""

    k: int
    promote_group: int
    demote_group: int
    promoted_rows: tuple
    demoted_rows: tuple
    rates_before: tuple
    rates_after: tuple
    truncated: bool


def _positive_rates(ds: Dataset) -> tuple:
    z, y = ds.sensitive, ds.labels
    return (
        float(y[z == 0].mean()),
        float(y[z == 1].mean()),
    )


def massage(train: Dataset, ranker: Model) -> tuple:
    """Relabel the fewest rows that (nearly) equalize group positive rates.

    The group with the lower positive rate receives promotions: its k
    highest-scoring label-0 rows (by the ranker) become 1; the other group's
    k lowest-scoring label-1 rows become 0, keeping the overall positive
    count unchanged. k = round(gap * n0 * n1 / n), adjusted by one when
    rounding left the residual rate gap above 1/min(n0, n1) or when k - 1
    already meets that bound (the smaller count wins); admissibility is
    decided in exact integer arithmetic. When a side runs out of candidate
    rows, k is truncated and the plan is flagged. Returns (relabeled
    dataset, plan).
    """
    z, y = train.sensitive, train.labels
    n0, n1 = train.group_sizes()
    r0, r1 = _positive_rates(train)
    lo = 0 if r0 <= r1 else 1
    hi = 1 - lo
    gap = abs(r1 - r0)
    n = train.n
    k_target = int(round(gap * n0 * n1 / n))

    scores = score(ranker, train.features)
    cand_pro = np.flatnonzero((z == lo) & (y == 0))
    cand_dem = np.flatnonzero((z == hi) & (y == 1))
    # ties break toward the earlier row: stable sort on the negated/plain key
    cand_pro = cand_pro[np.argsort(-scores[cand_pro], kind="stable")]
    cand_dem = cand_dem[np.argsort(scores[cand_dem], kind="stable")]

    k_max = min(cand_pro.size, cand_dem.size)
    truncated = k_target > k_max

    counts = (int(y[z == 0].sum()), int(y[z == 1].sum()))
    sizes = (n0, n1)

    # the rate gap at k flips, scaled by n0*n1 so the bound comparison is
    # exact integer arithmetic: gap <= 1/min(n0, n1) iff residual <= max(n0, n1)
    def scaled_residual(k: int) -> int:
        c = list(counts)
        c[lo] += k
        c[hi] -= k
        return abs(c[0] * sizes[1] - c[1] * sizes[0])

    k = min(k_target, k_max)
    if not truncated:
        scaled_bound = max(n0, n1)
        if scaled_residual(k) > scaled_bound:
            options = [kk for kk in (k - 1, k, k + 1) if 0 <= kk <= k_max]
            k = min(options, key=scaled_residual)
            if scaled_residual(k) > scaled_bound:
                raise RepairError(
                    "could not bring the rate gap under "
                    f"{1.0 / min(n0, n1):.3g} (k={k})"
                )
        # round() can land on the upper of two admissible counts when the
        # window spans two integers; the smaller count is the repair
        while k > 0 and scaled_residual(k - 1) <= scaled_bound:
            k -= 1

    new_y = np.array(y, dtype=np.int8)
    promoted = cand_pro[:k]
    demoted = cand_dem[:k]
    new_y[promoted] = 1
    new_y[demoted] = 0
    plan = MassagingPlan(
        k=k,
        promote_group=lo,
        demote_group=hi,
        promoted_rows=tuple(int(i) for i in promoted),
        demoted_rows=tuple(int(i) for i in demoted),
        rates_before=(r0, r1),
        rates_after=(float(new_y[z == 0].mean()), float(new_y[z == 1].mean())),
        truncated=truncated,
    )
    repaired = train.with_labels(new_y, meta_update={
        "massaging": {"k": k, "promote_group": lo, "truncated": truncated},
    })
    return repaired, plan


# ---------------------------------------------------------------------------
# quantile repair


@dataclass(frozen=True)
class GroupQuantileMap:
    """Per-group monotone score maps onto the common barycenter distribution.

    knots_in[z] are the distinct training scores of group z; knots_out[z] are
    the repaired values: the group-size-weighted average of the two group
    quantile functions at the level each knot occupies in its own group.
    Application interpolates linearly and clamps outside the knot range.
    """

    knots_in: tuple
    knots_out: tuple
    weights: tuple

    def apply(self, scores: np.ndarray, sensitive: np.ndarray) -> np.ndarray:
        scores = np.asarray(scores, dtype=np.float64)
        z = np.asarray(sensitive)
        out = np.empty_like(scores)
        for zz in (0, 1):
            mask = z == zz
            out[mask] = np.interp(scores[mask], self.knots_in[zz],
                                  self.knots_out[zz])
        return out


def fit_quantile_repair(scores: np.ndarray, sensitive: np.ndarray) -> GroupQuantileMap:
    """Fit the per-group maps from one score sample.

    For each group, every sorted score sits at level (i - 1)/(m - 1); the
    repaired value averages this group's score with the other group's linear
    quantile at the same level, weighted by group sizes. Duplicate input
    scores collapse to the mean of their outputs so the map stays a
    function.
    """
    scores = np.asarray(scores, dtype=np.float64)
    z = np.asarray(sensitive)
    groups = []
    for zz in (0, 1):
        vals = np.sort(scores[z == zz])
        if vals.size < 2:
            raise GroupError(f"group {zz} needs at least 2 scores for repair")
        groups.append(vals)
    n0, n1 = groups[0].size, groups[1].size
    w = (n0 / (n0 + n1), n1 / (n0 + n1))

    knots_in = []
    knots_out = []
    for zz in (0, 1):
        own = groups[zz]
        other = groups[1 - zz]
        levels = np.arange(own.size) / (own.size - 1)
        other_q = np.quantile(other, levels, method="linear")
        out = w[zz] * own + w[1 - zz] * other_q
        uniq, inverse = np.unique(own, return_inverse=True)
        sums = np.bincount(inverse, weights=out)
        cnts = np.bincount(inverse)
        knots_in.append(uniq)
        knots_out.append(sums / cnts)
    return GroupQuantileMap(knots_in=tuple(knots_in), knots_out=tuple(knots_out),
                            weights=w)
