"""Differentiable surrogate penalties for training.

Between-group terms penalize a disparity between group means of a hinge,
sigmoid, or covariance statistic of the scores. Within-group terms compare
the model against a fixed reference model f* trained without constraints:
they upper-bound the exact cross-table quantities by replacing indicator
losses with the hinge phi(t) = (1 + t)+, keeping the empirical stratum
weights fixed. All terms expose value_and_grad over the score vector; the
parameter gradient is obtained by backprop in the models module.

Branch selection inside max/min structured terms follows the subgradient of
the currently active branch and is re-evaluated at every call. Ties resolve
to the earlier branch in a fixed documented order (group 0 before group 1,
demotion-style terms before promotion-style ones).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._stats import sigmoid
from .errors import GroupError, PenaltyConfigError
from .models import Model, score

BGF_KINDS = ("hinge_di", "hinge_me", "hinge_eop", "cov_di", "fnnc_di",
             "fnnc_eop", "msp", "none")
WGF_KINDS = ("undirected", "directed_di", "directed_eop", "kendall", "none")

# which between-group kinds a directed/score within-group kind may accompany
_WGF_ALLOWED_BGF = {
    "undirected": set(BGF_KINDS),
    "directed_di": {"hinge_di", "cov_di", "fnnc_di", "none"},
    "directed_eop": {"hinge_eop", "fnnc_eop", "none"},
    "kendall": {"msp", "none"},
    "none": set(BGF_KINDS),
}

# the exact report field each surrogate targets
BGF_EXACT_FIELD = {
    "hinge_di": "di", "cov_di": "di", "fnnc_di": "di",
    "hinge_me": "me",
    "hinge_eop": "eop", "fnnc_eop": "eop",
    "msp": "msp",
}
WGF_EXACT_FIELD = {
    "undirected": "wgf",
    "directed_di": "dwgf_di",
    "directed_eop": "dwgf_eop",
    "kendall": "one_minus_tau_bar",
}


def hinge(t: np.ndarray) -> np.ndarray:
    """phi(t) = (1 + t)+, the convex upper bound of 1{t >= 0} used throughout."""
    return np.maximum(1.0 + np.asarray(t, dtype=np.float64), 0.0)


def hinge_deriv(t: np.ndarray) -> np.ndarray:
    # subgradient choice 0 at the kink
    return (np.asarray(t, dtype=np.float64) > -1.0).astype(np.float64)


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty configuration: which surrogates, their weights, and the
    feasibility targets (epsilon for the between-group metric, delta for the
    within-group one) used by sweeps."""

    bgf: str = "none"
    wgf: str = "none"
    lam: float = 0.0
    eta: float = 0.0
    epsilon: float = 0.03
    delta: float = 0.01

    def __post_init__(self):
        if self.bgf not in BGF_KINDS:
            raise PenaltyConfigError(f"unknown bgf kind {self.bgf!r}")
        if self.wgf not in WGF_KINDS:
            raise PenaltyConfigError(f"unknown wgf kind {self.wgf!r}")
        if self.lam < 0 or self.eta < 0:
            raise PenaltyConfigError("penalty weights must be >= 0")
        if not (self.epsilon > 0 and self.delta > 0):
            raise PenaltyConfigError("epsilon and delta must be > 0")
        if self.lam > 0 and self.bgf == "none":
            raise PenaltyConfigError("lam > 0 needs a bgf kind")
        if self.eta > 0 and self.wgf == "none":
            raise PenaltyConfigError("eta > 0 needs a wgf kind")
        if self.bgf not in _WGF_ALLOWED_BGF[self.wgf]:
            raise PenaltyConfigError(
                f"wgf kind {self.wgf!r} cannot accompany bgf kind {self.bgf!r}"
            )


@dataclass(frozen=True)
class ReferenceModel:
    """Frozen reference f* with its cached training-row behaviour.

    p_table[y*, z] holds the empirical Pr{C*(X) = y* | Z = z} on the rows the
    reference was built from; these weights stay fixed inside the penalties
    no matter how the trained model moves.
    """

    model: Model
    scores: np.ndarray
    preds: np.ndarray
    p_table: np.ndarray
    group_sizes: tuple

    def __post_init__(self):
        for name in ("scores", "preds", "p_table"):
            a = np.ascontiguousarray(getattr(self, name))
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def build(cls, model: Model, ds) -> "ReferenceModel":
        s = score(model, ds.features)
        preds = (s > 0).astype(np.int8)
        z = ds.sensitive
        p = np.zeros((2, 2))
        sizes = []
        for zz in (0, 1):
            g = z == zz
            nz = int(g.sum())
            sizes.append(nz)
            p[1, zz] = preds[g].mean()
            p[0, zz] = 1.0 - p[1, zz]
        return cls(model=model, scores=np.asarray(s, dtype=np.float64),
                   preds=preds, p_table=p, group_sizes=tuple(sizes))

    def di_lo_group(self) -> int:
        """Group the reference favors less (ties -> group 0)."""
        return 0 if self.p_table[1, 0] <= self.p_table[1, 1] else 1


class ScoreObjective:
    """A term evaluated on the score vector of the training rows."""

    name = "objective"

    def value_and_grad(self, scores: np.ndarray):
        raise NotImplementedError

    def value(self, scores: np.ndarray) -> float:
        return self.value_and_grad(scores)[0]

    def kink_margin(self, scores: np.ndarray) -> float:
        """Distance to the nearest non-differentiable point (for gradient
        checking); inf for smooth terms."""
        return math.inf


# ---------------------------------------------------------------------------
# between-group surrogates


def _masks(ds):
    z = ds.sensitive
    return z == 0, z == 1


class _AbsGapObjective(ScoreObjective):
    """|mean over group 1 of T(s) - mean over group 0 of T(s)| with a
    per-row transform T; subclasses provide the transform and its
    derivative."""

    def __init__(self, mask0: np.ndarray, mask1: np.ndarray, name: str):
        n0, n1 = int(mask0.sum()), int(mask1.sum())
        if n0 == 0 or n1 == 0:
            raise GroupError(f"{name}: an averaging stratum is empty")
        self.name = name
        self._m0, self._m1 = mask0, mask1
        # signed averaging weights: +1/n1 on group 1, -1/n0 on group 0
        self._w = mask1 / n1 - mask0 / n0
        self._rows = mask0 | mask1

    def _transform(self, s):
        raise NotImplementedError

    def _gap(self, t):
        # differencing the separately averaged groups cancels exactly when
        # the group means agree, matching the exact metric's arithmetic
        return float(t[self._m1].mean()) - float(t[self._m0].mean())

    def value_and_grad(self, scores: np.ndarray):
        t, dt = self._transform(scores)
        gap = self._gap(t)
        sign = math.copysign(1.0, gap) if gap != 0 else 0.0
        return abs(gap), sign * self._w * dt


class HingeDi(_AbsGapObjective):
    """Hinge demographic-disparity surrogate: gap of group means of
    phi(f)."""

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        super().__init__(g0, g1, "hinge_di")

    def _transform(self, s):
        return hinge(s), hinge_deriv(s)

    def kink_margin(self, scores):
        t, _ = self._transform(scores)
        gap = abs(self._gap(t))
        return min(float(np.min(np.abs(1.0 + scores[self._rows]))), gap)


class HingeEop(_AbsGapObjective):
    """Hinge opportunity surrogate: the disparity gap restricted to
    positive-label rows."""

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        pos = ds.labels == 1
        super().__init__(g0 & pos, g1 & pos, "hinge_eop")

    def _transform(self, s):
        return hinge(s), hinge_deriv(s)

    def kink_margin(self, scores):
        t, _ = self._transform(scores)
        gap = abs(self._gap(t))
        return min(float(np.min(np.abs(1.0 + scores[self._rows]))), gap)


class HingeMe(ScoreObjective):
    """Hinge error-gap surrogate: gap (group 0 minus group 1) of group means
    of phi(-(2y - 1) f), the usual margin loss."""

    name = "hinge_me"

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        n0, n1 = int(g0.sum()), int(g1.sum())
        self._m0, self._m1 = g0, g1
        self._w = g0 / n0 - g1 / n1
        self._sgn_y = (2.0 * ds.labels - 1.0).astype(np.float64)

    def _gap(self, h):
        return float(h[self._m0].mean()) - float(h[self._m1].mean())

    def value_and_grad(self, scores: np.ndarray):
        t = -self._sgn_y * scores
        h = hinge(t)
        gap = self._gap(h)
        sign = math.copysign(1.0, gap) if gap != 0 else 0.0
        grad = sign * self._w * hinge_deriv(t) * (-self._sgn_y)
        return abs(gap), grad

    def kink_margin(self, scores):
        t = -self._sgn_y * scores
        gap = abs(self._gap(hinge(t)))
        return min(float(np.min(np.abs(1.0 + t))), gap)


class CovDi(ScoreObjective):
    """Covariance disparity surrogate: |mean (z - zbar) f(x)|."""

    name = "cov_di"

    def __init__(self, ds):
        z = ds.sensitive.astype(np.float64)
        self._zc = (z - z.mean()) / z.shape[0]

    def value_and_grad(self, scores: np.ndarray):
        c = float(self._zc @ scores)
        sign = math.copysign(1.0, c) if c != 0 else 0.0
        return abs(c), sign * self._zc

    def kink_margin(self, scores):
        return abs(float(self._zc @ scores))


class _SigmoidGap(_AbsGapObjective):
    def _transform(self, s):
        sp = sigmoid(s)
        return sp, sp * (1.0 - sp)

    def kink_margin(self, scores):
        t, _ = self._transform(scores)
        return abs(self._gap(t))


class FnncDi(_SigmoidGap):
    """Smooth disparity surrogate: gap of group means of sigmoid(f)."""

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        super().__init__(g0, g1, "fnnc_di")


class FnncEop(_SigmoidGap):
    """Smooth opportunity surrogate: sigmoid gap on positive-label rows."""

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        pos = ds.labels == 1
        super().__init__(g0 & pos, g1 & pos, "fnnc_eop")


class Msp(_SigmoidGap):
    """Mean-score disparity; identical in form to the smooth disparity
    surrogate and also the exact metric it targets."""

    def __init__(self, ds):
        g0, g1 = _masks(ds)
        super().__init__(g0, g1, "msp")


def make_bgf(kind: str, ds) -> ScoreObjective | None:
    table = {
        "hinge_di": HingeDi, "hinge_me": HingeMe, "hinge_eop": HingeEop,
        "cov_di": CovDi, "fnnc_di": FnncDi, "fnnc_eop": FnncEop, "msp": Msp,
    }
    if kind == "none":
        return None
    if kind not in table:
        raise PenaltyConfigError(f"unknown bgf kind {kind!r}")
    return table[kind](ds)


def bgf_surrogate(kind: str, model: Model, ds) -> float:
    obj = make_bgf(kind, ds)
    if obj is None:
        return 0.0
    return obj.value(score(model, ds.features))


# ---------------------------------------------------------------------------
# within-group surrogates


def _branch(sign: float, mask: np.ndarray, denom: int):
    """A hinge-sum branch sum phi(sign * s over mask) / denom, or None when
    the mask is empty."""
    if not mask.any():
        return None
    return sign, mask, denom


def _branch_value(branch, s):
    sign, mask, denom = branch
    return float(hinge(sign * s[mask]).sum()) / denom


def _branch_grad(branch, s, out, scale=1.0):
    sign, mask, denom = branch
    out[mask] += scale * sign * hinge_deriv(sign * s[mask]) / denom


def _branch_margin(branch, s):
    sign, mask, denom = branch
    return float(np.min(np.abs(1.0 + sign * s[mask])))


class UndirectedWgf(ScoreObjective):
    """Worst group's cheaper direction of disagreement with the reference:
    max over z of min{ sum phi(-f)/n_z over reference-positives,
    sum phi(f)/n_z over reference-negatives }.

    An empty reference stratum makes its min branch unavailable (the other
    branch is used); the construction warns once per empty stratum.
    """

    name = "undirected_wgf"

    def __init__(self, ref: ReferenceModel, ds):
        z = ds.sensitive
        self._groups = []
        for zz in (0, 1):
            g = z == zz
            nz = int(g.sum())
            dem = _branch(-1.0, g & (ref.preds == 1), nz)  # demotions
            pro = _branch(+1.0, g & (ref.preds == 0), nz)  # promotions
            for b, what in ((dem, "positives"), (pro, "negatives")):
                if b is None:
                    warnings.warn(
                        f"group {zz} has no reference {what}; that branch is unavailable"
                    )
            self._groups.append((dem, pro))

    def _group_min(self, branches, s):
        """(value, branch) with a missing branch treated as +inf; the
        demotion branch wins ties."""
        dem, pro = branches
        vals = []
        for b in (dem, pro):
            vals.append(math.inf if b is None else _branch_value(b, s))
        if dem is None and pro is None:
            return 0.0, None
        return (vals[0], dem) if vals[0] <= vals[1] else (vals[1], pro)

    def value_and_grad(self, scores: np.ndarray):
        picks = [self._group_min(br, scores) for br in self._groups]
        zstar = 0 if picks[0][0] >= picks[1][0] else 1
        value, branch = picks[zstar]
        grad = np.zeros_like(scores)
        if branch is not None:
            _branch_grad(branch, scores, grad)
        return value, grad

    def kink_margin(self, scores):
        margins = []
        vals = []
        for dem, pro in self._groups:
            bv = []
            for b in (dem, pro):
                if b is not None:
                    margins.append(_branch_margin(b, scores))
                    bv.append(_branch_value(b, scores))
            if len(bv) == 2:
                margins.append(abs(bv[0] - bv[1]))
            vals.append(min(bv) if bv else 0.0)
        margins.append(abs(vals[0] - vals[1]))
        return min(margins)


class DirectedDiWgf(ScoreObjective):
    """Directed within-group surrogate for disparity repair: penalize
    demotions in the group the reference favors less and promotions in the
    other, taking the worse of the two. The direction is read off the
    reference's positive rates (ties -> group 0 is the low side)."""

    name = "directed_di_wgf"

    def __init__(self, ref: ReferenceModel, ds):
        z = ds.sensitive
        lo = ref.di_lo_group()
        hi = 1 - lo
        g_lo, g_hi = z == lo, z == hi
        self.lo_group = lo
        self._terms = []
        dem = _branch(-1.0, g_lo & (ref.preds == 1), int(g_lo.sum()))
        pro = _branch(+1.0, g_hi & (ref.preds == 0), int(g_hi.sum()))
        for b, what in ((dem, f"group {lo} reference positives"),
                        (pro, f"group {hi} reference negatives")):
            if b is None:
                warnings.warn(f"no {what}; that directed term is dropped")
            else:
                self._terms.append(b)

    def value_and_grad(self, scores: np.ndarray):
        grad = np.zeros_like(scores)
        if not self._terms:
            return 0.0, grad
        vals = [_branch_value(b, scores) for b in self._terms]
        k = int(np.argmax(vals))
        _branch_grad(self._terms[k], scores, grad)
        return vals[k], grad

    def kink_margin(self, scores):
        if not self._terms:
            return math.inf
        margins = [_branch_margin(b, scores) for b in self._terms]
        if len(self._terms) == 2:
            vals = [_branch_value(b, scores) for b in self._terms]
            margins.append(abs(vals[0] - vals[1]))
        return min(margins)


class DirectedEopWgf(ScoreObjective):
    """Directed within-group surrogate for opportunity repair.

    On positive-label rows: directed demotion/promotion terms as in the
    disparity case, with stratum weights conditional on (z, y=1) and the
    direction read off the reference's positive rates among y=1 rows. On
    negative-label rows: the undirected worst-direction term per group. The
    overall value is the max; ties resolve in the fixed order
    (low-side demotions, high-side promotions, group 0, group 1)."""

    name = "directed_eop_wgf"

    def __init__(self, ref: ReferenceModel, ds):
        z, y = ds.sensitive, ds.labels

        def stratum(zz, yy):
            return (z == zz) & (y == yy)

        n_zy = {(zz, yy): int(stratum(zz, yy).sum()) for zz in (0, 1) for yy in (0, 1)}

        def pos_ref_rate(zz):
            m = stratum(zz, 1)
            if n_zy[(zz, 1)] == 0:
                return 0.0
            return float((ref.preds[m] == 1).mean())

        lo = 0 if pos_ref_rate(0) <= pos_ref_rate(1) else 1
        hi = 1 - lo
        self.lo_group = lo

        self._max_terms = []  # directed terms on y=1 strata
        for zz, sign, ref_side in ((lo, -1.0, 1), (hi, +1.0, 0)):
            if n_zy[(zz, 1)] == 0:
                warnings.warn(f"empty (z={zz}, y=1) stratum: directed term dropped")
                continue
            mask = stratum(zz, 1) & (ref.preds == ref_side)
            # empty reference side here is a true zero, not an unavailable branch
            self._max_terms.append((sign, mask, n_zy[(zz, 1)]))

        self._min_groups = []  # per-group branch pairs on y=0 strata
        for zz in (0, 1):
            if n_zy[(zz, 0)] == 0:
                warnings.warn(f"empty (z={zz}, y=0) stratum: group dropped")
                continue
            dem = _branch(-1.0, stratum(zz, 0) & (ref.preds == 1), n_zy[(zz, 0)])
            pro = _branch(+1.0, stratum(zz, 0) & (ref.preds == 0), n_zy[(zz, 0)])
            self._min_groups.append((dem, pro))

    def _candidates(self, s):
        """(value, gradient recipe) per term in tie-break order."""
        out = []
        for term in self._max_terms:
            out.append((float(hinge(term[0] * s[term[1]]).sum()) / term[2]
                        if term[1].any() else 0.0,
                        term if term[1].any() else None))
        for dem, pro in self._min_groups:
            vals = [math.inf if b is None else _branch_value(b, s) for b in (dem, pro)]
            if vals[0] <= vals[1]:
                out.append((vals[0], dem))
            else:
                out.append((vals[1], pro))
        return out

    def value_and_grad(self, scores: np.ndarray):
        grad = np.zeros_like(scores)
        cands = self._candidates(scores)
        if not cands:
            return 0.0, grad
        k = int(np.argmax([v for v, _ in cands]))
        value, branch = cands[k]
        if branch is not None:
            _branch_grad(branch, scores, grad)
        return value, grad

    def kink_margin(self, scores):
        margins = []
        for sign, mask, _denom in self._max_terms:
            if mask.any():
                margins.append(float(np.min(np.abs(1.0 + sign * scores[mask]))))
        for dem, pro in self._min_groups:
            bv = []
            for b in (dem, pro):
                if b is not None:
                    margins.append(_branch_margin(b, scores))
                    bv.append(_branch_value(b, scores))
            if len(bv) == 2:
                margins.append(abs(bv[0] - bv[1]))
        cands = [v for v, _ in self._candidates(scores)]
        cands.sort(reverse=True)
        if len(cands) >= 2:
            margins.append(abs(cands[0] - cands[1]))
        return min(margins) if margins else math.inf


def make_wgf(kind: str, ref: ReferenceModel, ds) -> ScoreObjective | None:
    table = {
        "undirected": UndirectedWgf,
        "directed_di": DirectedDiWgf,
        "directed_eop": DirectedEopWgf,
    }
    if kind == "none":
        return None
    if kind not in table:
        raise PenaltyConfigError(
            f"wgf kind {kind!r} is not a classifier surrogate"
        )
    return table[kind](ref, ds)


def wgf_surrogate(kind: str, model: Model, ref: ReferenceModel, ds) -> float:
    obj = make_wgf(kind, ref, ds)
    if obj is None:
        return 0.0
    return obj.value(score(model, ds.features))


# ---------------------------------------------------------------------------
# rank-agreement surrogate for score functions


class KendallPenalty(ScoreObjective):
    """Pairwise concordance penalty against the reference scores.

    Per within-group pair, the loss is (1 - prod)+ with
    prod = (f(xi) - f(xj)) (f*(xi) - f*(xj)): zero once the pair is ordered
    the same way with margin, linear in the discordant direction. The value
    averages the two per-group means. pairs=None enumerates every unordered
    pair; an integer draws that many uniform pairs per group once, from
    `seed`, and keeps them fixed for the life of the term.
    """

    name = "kendall"

    def __init__(self, ref: ReferenceModel, ds, pairs: int | None, seed: int = 0):
        z = ds.sensitive
        rng = np.random.default_rng(seed)
        self._pairs = []
        for zz in (0, 1):
            idx = np.flatnonzero(z == zz)
            m = idx.shape[0]
            if m < 2:
                raise GroupError(f"group {zz} has fewer than 2 rows; no pairs exist")
            if pairs is None:
                iu, ju = np.triu_indices(m, k=1)
                gi, gj = idx[iu], idx[ju]
            else:
                if pairs < 1:
                    raise PenaltyConfigError("pairs must be >= 1")
                i = rng.integers(0, m, size=pairs)
                j = rng.integers(0, m - 1, size=pairs)
                j = j + (j >= i)
                gi, gj = idx[i], idx[j]
            dstar = ref.scores[gi] - ref.scores[gj]
            self._pairs.append((gi, gj, dstar))

    def value_and_grad(self, scores: np.ndarray):
        value = 0.0
        grad = np.zeros_like(scores)
        for gi, gj, dstar in self._pairs:
            prod = (scores[gi] - scores[gj]) * dstar
            loss = np.maximum(1.0 - prod, 0.0)
            npairs = gi.shape[0]
            value += 0.5 * float(loss.mean())
            coeff = -(loss > 0).astype(np.float64) * dstar / (2.0 * npairs)
            np.add.at(grad, gi, coeff)
            np.add.at(grad, gj, -coeff)
        return value, grad

    def kink_margin(self, scores):
        m = math.inf
        for gi, gj, dstar in self._pairs:
            prod = (scores[gi] - scores[gj]) * dstar
            m = min(m, float(np.min(np.abs(1.0 - prod))))
        return m

    def pair_tau_bar(self, scores: np.ndarray) -> float:
        """Rank agreement estimated on this term's own pair sample (used for
        cheap progress tracing; final reports use the exact metric)."""
        taus = []
        for gi, gj, dstar in self._pairs:
            prod = (scores[gi] - scores[gj]) * dstar
            taus.append(float(np.mean(prod > 0)))
        return 0.5 * (taus[0] + taus[1])


def make_kendall(ref: ReferenceModel, ds, pairs: int | None,
                 seed: int = 0) -> KendallPenalty:
    return KendallPenalty(ref, ds, pairs, seed)


def kendall_surrogate(model: Model, ref: ReferenceModel, ds,
                      pairs: int | None, seed: int = 0) -> float:
    return make_kendall(ref, ds, pairs, seed).value(score(model, ds.features))
