"""Surrogate penalty terms: hinge pieces, between-group objectives, the
within-group branch machinery, and the pairwise concordance penalty."""

import math
import warnings

import numpy as np
import pytest

from duofair.errors import GroupError, PenaltyConfigError
from duofair.metrics import cross_table, dwgf_value, kendall_tau, wgf_value
from duofair.models import Model
from duofair.penalties import (BGF_EXACT_FIELD, BGF_KINDS, WGF_EXACT_FIELD,
                               WGF_KINDS, CovDi, DirectedDiWgf,
                               DirectedEopWgf, FnncDi, FnncEop, HingeDi,
                               HingeEop, HingeMe, KendallPenalty, Msp,
                               PenaltySpec, ReferenceModel, UndirectedWgf,
                               bgf_surrogate, hinge, hinge_deriv,
                               kendall_surrogate, make_bgf, make_kendall,
                               make_wgf, wgf_surrogate)

from oracles import fd_gradient
from util import identity_model, raw_dataset, reference_from_scores, score_dataset

# Shared 8-row fixture: reference scores, groups, and a trained-score vector
# whose hand values are easy to chase through the branch arithmetic.
REF8 = np.array([2.0, 1.0, -1.0, -2.0, 3.0, -1.0, -2.0, -3.0])
Z8 = np.array([0, 0, 0, 0, 1, 1, 1, 1])
F8 = np.array([0.5, -0.5, 0.5, -0.5, 1.0, 1.0, -1.0, -1.0])


# ---------------------------------------------------------------------------
# hinge pieces


def test_hinge_values():
    assert hinge(np.array([0.0]))[0] == 1.0
    assert hinge(np.array([-2.0]))[0] == 0.0
    assert hinge(np.array([0.5]))[0] == 1.5


def test_hinge_subgradient_zero_at_kink():
    d = hinge_deriv(np.array([-2.0, -1.0, -0.5, 3.0]))
    assert d.tolist() == [0.0, 0.0, 1.0, 1.0]


# ---------------------------------------------------------------------------
# penalty configuration


def test_spec_weight_requires_a_kind():
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="none", lam=0.5)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(wgf="none", eta=0.5)


def test_spec_rejects_negative_weights_and_targets():
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="hinge_di", lam=-1.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(epsilon=0.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(delta=-0.1)


def test_spec_combination_matrix():
    PenaltySpec(bgf="hinge_di", wgf="directed_di", lam=1.0, eta=1.0)
    PenaltySpec(bgf="hinge_eop", wgf="directed_eop", lam=1.0, eta=1.0)
    PenaltySpec(bgf="msp", wgf="kendall", lam=1.0, eta=1.0)
    PenaltySpec(bgf="hinge_me", wgf="undirected", lam=1.0, eta=1.0)
    PenaltySpec(bgf="none", wgf="directed_di", eta=1.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="hinge_eop", wgf="directed_di", lam=1.0, eta=1.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="hinge_di", wgf="directed_eop", lam=1.0, eta=1.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="hinge_di", wgf="kendall", lam=1.0, eta=1.0)
    with pytest.raises(PenaltyConfigError):
        PenaltySpec(bgf="sharpe", lam=1.0)


def test_exact_field_maps_cover_all_kinds():
    assert set(BGF_EXACT_FIELD) == set(BGF_KINDS) - {"none"}
    assert set(WGF_EXACT_FIELD) == set(WGF_KINDS) - {"none"}
    assert WGF_EXACT_FIELD["kendall"] == "one_minus_tau_bar"
    assert BGF_EXACT_FIELD["cov_di"] == "di"


# ---------------------------------------------------------------------------
# reference model


def test_reference_model_caches_training_behaviour():
    ref, ds = reference_from_scores(REF8, Z8)
    assert np.array_equal(ref.scores, REF8)
    assert ref.preds.tolist() == [1, 1, 0, 0, 1, 0, 0, 0]
    assert ref.p_table[1, 0] == 0.5
    assert ref.p_table[1, 1] == 0.25
    assert ref.p_table[0, 1] == 0.75
    assert ref.group_sizes == (4, 4)
    assert ref.di_lo_group() == 1  # group 1 gets fewer reference positives


def test_reference_direction_tie_goes_to_group_zero():
    ref, _ = reference_from_scores(np.array([1.0, -1.0, 2.0, -2.0]),
                                   np.array([0, 0, 1, 1]))
    assert ref.p_table[1, 0] == ref.p_table[1, 1] == 0.5
    assert ref.di_lo_group() == 0


# ---------------------------------------------------------------------------
# between-group surrogates


def _bgf_fixture():
    z = np.array([0, 0, 0, 1, 1, 1])
    y = np.array([1, 0, 1, 1, 1, 0])
    return raw_dataset(np.zeros((6, 1)), z, y)


def test_all_bgf_surrogates_vanish_at_zero_scores():
    ds = _bgf_fixture()
    s = np.zeros(6)
    for kind in ("hinge_di", "hinge_me", "cov_di", "fnnc_di", "msp"):
        assert make_bgf(kind, ds).value(s) == 0.0


def test_hinge_di_hand_value_and_gradient():
    ds = _bgf_fixture()
    s = np.array([-0.3, -0.3, -0.3, 0.2, 0.2, 0.2])
    obj = HingeDi(ds)
    value, grad = obj.value_and_grad(s)
    # group 1 mean hinge 1.2, group 0 mean hinge 0.7
    assert value == pytest.approx(0.5)
    assert np.allclose(grad, [-1 / 3, -1 / 3, -1 / 3, 1 / 3, 1 / 3, 1 / 3])


def test_hinge_di_zero_gap_has_zero_subgradient():
    ds = _bgf_fixture()
    s = np.array([0.4, 0.4, 0.4, 0.4, 0.4, 0.4])
    value, grad = HingeDi(ds).value_and_grad(s)
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_hinge_eop_restricts_to_positive_rows():
    ds = _bgf_fixture()  # positives: rows 0, 2 (group 0) and 3, 4 (group 1)
    s = np.array([0.0, 99.0, 1.0, -0.5, 0.5, 99.0])
    obj = HingeEop(ds)
    v = obj.value(s)
    expect = abs((hinge(np.array([-0.5, 0.5])).mean())
                 - (hinge(np.array([0.0, 1.0])).mean()))
    assert v == pytest.approx(expect)


def test_hinge_eop_needs_positives_in_both_groups():
    z = np.array([0, 0, 1, 1])
    y = np.array([1, 0, 0, 0])
    ds = raw_dataset(np.zeros((4, 1)), z, y)
    with pytest.raises(GroupError):
        HingeEop(ds)


def test_hinge_me_uses_margin_losses():
    z = np.array([0, 0, 1, 1])
    y = np.array([1, 0, 1, 0])
    ds = raw_dataset(np.zeros((4, 1)), z, y)
    s = np.array([2.0, -2.0, -2.0, 2.0])
    # group 0 rows are well classified (loss 0), group 1 rows are margin
    # violations: phi(2) = 3 each
    v = HingeMe(ds).value(s)
    assert v == pytest.approx(3.0)


def test_cov_di_two_point_value():
    z = np.array([0, 1])
    ds = raw_dataset(np.zeros((2, 1)), z, np.array([0, 1]))
    v = CovDi(ds).value(np.array([1.0, 3.0]))
    assert v == pytest.approx(0.5)  # |b - a| / 4 for n = 2


def test_sigmoid_family_hand_values():
    ds = _bgf_fixture()
    s = np.array([0.0, 0.0, 0.0, 10.0, 10.0, 10.0])
    v = FnncDi(ds).value(s)
    assert v == pytest.approx(1.0 / (1.0 + math.exp(-10.0)) - 0.5, abs=1e-12)
    assert Msp(ds).value(s) == pytest.approx(v)
    ve = FnncEop(ds).value(s)
    assert ve == pytest.approx(1.0 / (1.0 + math.exp(-10.0)) - 0.5, abs=1e-12)


def test_make_bgf_none_and_unknown():
    ds = _bgf_fixture()
    assert make_bgf("none", ds) is None
    with pytest.raises(PenaltyConfigError):
        make_bgf("ridge", ds)


# ---------------------------------------------------------------------------
# undirected within-group surrogate


def test_undirected_hand_value_and_gradient():
    ref, ds = reference_from_scores(REF8, Z8)
    obj = UndirectedWgf(ref, ds)
    value, grad = obj.value_and_grad(F8)
    # group 0: demotion and promotion branches both 0.5, demotions win the
    # tie; group 1: demotion branch 0
    assert value == pytest.approx(0.5)
    expect = np.zeros(8)
    expect[0] = expect[1] = -0.25
    assert np.allclose(grad, expect)


def test_undirected_at_zero_scores_matches_reference_split():
    ref, ds = reference_from_scores(REF8, Z8)
    v = UndirectedWgf(ref, ds).value(np.zeros(8))
    # phi(0) = 1 turns each branch into its reference-side share
    assert v == max(min(0.5, 0.5), min(0.25, 0.75))


def test_undirected_vanishes_on_large_margin_copy():
    ref, ds = reference_from_scores(REF8, Z8)
    f = 10.0 * (2.0 * ref.preds - 1.0)
    value, grad = UndirectedWgf(ref, ds).value_and_grad(f)
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_undirected_group_tie_resolves_to_group_zero():
    ref, ds = reference_from_scores(np.array([1.0, 1.0, -1.0, -1.0,
                                              2.0, 2.0, -2.0, -2.0]), Z8)
    _, grad = UndirectedWgf(ref, ds).value_and_grad(np.zeros(8))
    # both groups tie at 0.5 and both branches tie inside each group: the
    # group 0 demotion branch carries the subgradient
    assert np.allclose(grad[:2], -0.25)
    assert np.all(grad[2:] == 0.0)


def test_undirected_warns_on_missing_reference_side():
    ref, ds = reference_from_scores(np.array([1.0, 2.0, 1.0, 2.0]),
                                    np.array([0, 0, 1, 1]))
    with pytest.warns(UserWarning, match="no reference negatives"):
        obj = UndirectedWgf(ref, ds)
    # the unavailable promotion branches leave the demotion branches in play
    v = obj.value(np.zeros(4))
    assert v == 1.0


def test_undirected_dominates_exact_metric(rng):
    for _ in range(25):
        n = int(rng.integers(8, 60))
        z = rng.integers(0, 2, size=n)
        if z.min() == 1 or z.max() == 0:
            continue
        g = rng.standard_normal(n)
        f = rng.standard_normal(n)
        ref, ds = reference_from_scores(g, z)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            obj = UndirectedWgf(ref, ds)
        ct = cross_table(ref.preds, (f > 0).astype(int), z)
        assert obj.value(f) >= wgf_value(ct) - 1e-12


# ---------------------------------------------------------------------------
# directed within-group surrogates


def test_directed_di_follows_reference_direction():
    ref, ds = reference_from_scores(REF8, Z8)
    obj = DirectedDiWgf(ref, ds)
    assert obj.lo_group == 1
    value, grad = obj.value_and_grad(F8)
    # low side (group 1) demotions: phi(-1) = 0; high side promotions:
    # phi(0.5) + phi(-0.5) over 4
    assert value == pytest.approx(0.5)
    expect = np.zeros(8)
    expect[2] = expect[3] = 0.25
    assert np.allclose(grad, expect)


def test_directed_di_dominates_exact_metric(rng):
    for _ in range(25):
        n = int(rng.integers(8, 60))
        z = rng.integers(0, 2, size=n)
        if z.min() == 1 or z.max() == 0:
            continue
        g = rng.standard_normal(n)
        f = rng.standard_normal(n)
        ref, ds = reference_from_scores(g, z)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            obj = DirectedDiWgf(ref, ds)
        ct = cross_table(ref.preds, (f > 0).astype(int), z)
        assert obj.value(f) >= dwgf_value(ct, "di") - 1e-12


def test_directed_di_warns_when_a_side_is_missing():
    # the low-rate group has no reference positives to demote
    ref, ds = reference_from_scores(np.array([-1.0, -2.0, 1.0, -1.0]),
                                    np.array([0, 0, 1, 1]))
    with pytest.warns(UserWarning, match="reference positives"):
        DirectedDiWgf(ref, ds)


def test_directed_eop_hand_values():
    y = np.array([1, 1, 0, 0, 1, 0, 0, 0])
    ref, _ = reference_from_scores(REF8, Z8)
    ds = score_dataset(REF8, Z8, labels=y)
    obj = DirectedEopWgf(ref, ds)
    assert obj.lo_group == 0  # positive-row reference rates tie at 1.0
    value, grad = obj.value_and_grad(F8)
    # low-side directed term: phi(-0.5) + phi(0.5) over the two (z=0, y=1)
    # rows; it beats both negative-label minima
    assert value == pytest.approx(1.0)
    expect = np.zeros(8)
    expect[0] = expect[1] = -0.5
    assert np.allclose(grad, expect)


def test_directed_eop_empty_reference_side_is_a_true_zero():
    y = np.array([1, 1, 0, 0, 1, 0, 0, 0])
    ref, _ = reference_from_scores(REF8, Z8)
    ds = score_dataset(REF8, Z8, labels=y)
    obj = DirectedEopWgf(ref, ds)
    # high-side (z=1, y=1) rows are all reference positives, so the
    # promotion term has an empty mask and contributes exactly zero; a
    # large-margin copy of the reference zeroes every other term too
    f = 10.0 * (2.0 * ref.preds - 1.0)
    value, grad = obj.value_and_grad(f)
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_directed_eop_warns_and_drops_empty_strata():
    y = np.array([1, 1, 0, 0, 0, 0, 0, 0])  # no (z=1, y=1) rows
    ref, _ = reference_from_scores(REF8, Z8)
    ds = score_dataset(REF8, Z8, labels=y)
    with pytest.warns(UserWarning, match="y=1"):
        obj = DirectedEopWgf(ref, ds)
    assert math.isfinite(obj.value(F8))


def test_directed_eop_dominates_exact_metric(rng):
    for _ in range(25):
        n = int(rng.integers(12, 60))
        z = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        ok = all(np.any((z == zz) & (y == yy)) for zz in (0, 1) for yy in (0, 1))
        if not ok:
            continue
        g = rng.standard_normal(n)
        f = rng.standard_normal(n)
        ref, _ = reference_from_scores(g, z)
        ds = score_dataset(g, z, labels=y)
        obj = DirectedEopWgf(ref, ds)
        ct = cross_table(ref.preds, (f > 0).astype(int), z, y)
        assert obj.value(f) >= dwgf_value(ct, "eop") - 1e-12


def test_make_wgf_kinds():
    ref, ds = reference_from_scores(REF8, Z8)
    assert make_wgf("none", ref, ds) is None
    assert isinstance(make_wgf("undirected", ref, ds), UndirectedWgf)
    with pytest.raises(PenaltyConfigError):
        make_wgf("kendall", ref, ds)  # score surrogate, separate constructor


# ---------------------------------------------------------------------------
# pairwise concordance penalty


def test_kendall_constant_scores_cost_one():
    ref, ds = reference_from_scores(REF8, Z8)
    pen = KendallPenalty(ref, ds, pairs=None)
    value, grad = pen.value_and_grad(np.full(8, 2.0))
    assert value == 1.0
    # every pair sits exactly at the hinge boundary's interior (prod = 0),
    # so each contributes its slope
    assert np.any(grad != 0.0)


def test_kendall_vanishes_with_unit_margins():
    ref_scores = np.array([3.0, 1.0, 2.0, 0.0, 7.0, 5.0, 6.0, 4.0])
    ref, ds = reference_from_scores(ref_scores, Z8)
    pen = KendallPenalty(ref, ds, pairs=None)
    value, grad = pen.value_and_grad(ref_scores)
    # integer gaps make every pair product >= 1
    assert value == 0.0
    assert np.all(grad == 0.0)
    assert pen.pair_tau_bar(ref_scores) == 1.0


def test_kendall_exhaustive_matches_pair_loop(rng):
    z = Z8
    g = rng.standard_normal(8)
    f = rng.standard_normal(8)
    ref, ds = reference_from_scores(g, z)
    pen = KendallPenalty(ref, ds, pairs=None)
    value = pen.value(f)
    manual = 0.0
    for zz in (0, 1):
        idx = np.flatnonzero(z == zz)
        losses = []
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                i, j = idx[a], idx[b]
                prod = (f[i] - f[j]) * (g[i] - g[j])
                losses.append(max(0.0, 1.0 - prod))
        manual += 0.5 * float(np.mean(losses))
    assert value == pytest.approx(manual, abs=1e-12)


def test_kendall_dominates_one_minus_tau(rng):
    for _ in range(25):
        n = int(rng.integers(8, 50))
        z = rng.integers(0, 2, size=n)
        if np.sum(z == 0) < 2 or np.sum(z == 1) < 2:
            continue
        g = rng.standard_normal(n)
        f = rng.standard_normal(n)
        ref, ds = reference_from_scores(g, z)
        pen = KendallPenalty(ref, ds, pairs=None)
        tau_bar = kendall_tau(f, g, z)[2]
        assert pen.value(f) >= (1.0 - tau_bar) - 1e-12


def test_kendall_sampled_pairs_are_fixed_per_construction():
    rng = np.random.default_rng(4)
    g = rng.standard_normal(60)
    f = rng.standard_normal(60)
    z = np.arange(60) % 2
    ref, ds = reference_from_scores(g, z)
    a = KendallPenalty(ref, ds, pairs=500, seed=9)
    b = KendallPenalty(ref, ds, pairs=500, seed=9)
    assert a.value(f) == b.value(f)
    c = KendallPenalty(ref, ds, pairs=500, seed=10)
    assert a.value(f) != c.value(f)  # different sample, different estimate


def test_kendall_rejects_degenerate_groups():
    ref, ds = reference_from_scores(np.array([1.0, 2.0, 3.0]),
                                    np.array([0, 0, 1]))
    with pytest.raises(GroupError):
        KendallPenalty(ref, ds, pairs=None)
    ref8, ds8 = reference_from_scores(REF8, Z8)
    with pytest.raises(PenaltyConfigError):
        KendallPenalty(ref8, ds8, pairs=0)


# ---------------------------------------------------------------------------
# convenience evaluators


def test_surrogate_conveniences_match_objective_values():
    ref, ds = reference_from_scores(REF8, Z8)
    model = identity_model(1)
    assert bgf_surrogate("hinge_di", model, ds) == HingeDi(ds).value(REF8)
    assert bgf_surrogate("none", model, ds) == 0.0
    assert wgf_surrogate("undirected", model, ref, ds) == \
        UndirectedWgf(ref, ds).value(REF8)
    assert wgf_surrogate("none", model, ref, ds) == 0.0
    assert kendall_surrogate(model, ref, ds, pairs=None) == \
        KendallPenalty(ref, ds, pairs=None).value(REF8)


# ---------------------------------------------------------------------------
# gradient spot checks away from kinks


def _fd_check(obj, s):
    margin = obj.kink_margin(s)
    assert margin > 1e-3, "fixture sits on a kink; adjust it"
    _, grad = obj.value_and_grad(s)
    fd = fd_gradient(obj.value, s)
    denom = max(1.0, float(np.linalg.norm(fd)))
    assert np.linalg.norm(grad - fd) / denom < 1e-4


def test_gradients_match_finite_differences_away_from_kinks(rng):
    g = rng.standard_normal(12) * 1.3
    z = np.arange(12) % 2
    y = rng.integers(0, 2, size=12)
    y[:4] = [1, 0, 1, 0]
    ref, _ = reference_from_scores(g, z)
    ds = score_dataset(g, z, labels=y)
    s = rng.standard_normal(12) * 1.1 + 0.13
    for kind in ("hinge_di", "hinge_me", "hinge_eop", "cov_di", "fnnc_di",
                 "fnnc_eop", "msp"):
        _fd_check(make_bgf(kind, ds), s)
    for obj in (UndirectedWgf(ref, ds), DirectedDiWgf(ref, ds),
                DirectedEopWgf(ref, ds), KendallPenalty(ref, ds, pairs=None)):
        _fd_check(obj, s)
