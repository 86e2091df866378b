"""Shared fixture-building helpers for the test suite."""

import numpy as np

from duofair.data import Dataset, Standardizer
from duofair.models import Model
from duofair.penalties import ReferenceModel


def raw_dataset(features, sensitive, labels, test_mask=None, meta=None) -> Dataset:
    """Dataset wrapper with an identity standardizer, for hand fixtures."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    return Dataset(
        features=X,
        sensitive=np.asarray(sensitive),
        labels=np.asarray(labels),
        feature_names=tuple(f"x{j}" for j in range(p)),
        standardizer=Standardizer(mean=np.zeros(p), sd=np.ones(p)),
        test_mask=test_mask,
        meta=dict(meta or {}),
    )


def score_dataset(ref_scores, sensitive, labels=None) -> Dataset:
    """Single-feature dataset whose feature column IS the desired reference
    score, so a w=1, b=0 linear model reproduces it exactly."""
    ref_scores = np.asarray(ref_scores, dtype=np.float64)
    if labels is None:
        labels = (ref_scores > 0).astype(np.int8)
    return raw_dataset(ref_scores[:, None], sensitive, labels)


def identity_model(p=1) -> Model:
    """Linear model returning its (single) input feature."""
    params = np.zeros(p + 1)
    params[0] = 1.0
    return Model(kind="linear", p=p, params=params)


def reference_from_scores(ref_scores, sensitive, labels=None):
    """(ReferenceModel, Dataset) pair realizing the given reference scores."""
    ds = score_dataset(ref_scores, sensitive, labels)
    ref = ReferenceModel.build(identity_model(1), ds)
    return ref, ds


def random_labeled_instance(rng, n_max=200, with_ties=False):
    """(scores, ref_scores, sensitive, labels) with both groups and both
    classes present; optionally coarsened scores so ties occur."""
    while True:
        n = int(rng.integers(8, n_max + 1))
        z = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)
        if z.min() == 0 and z.max() == 1 and y.min() == 0 and y.max() == 1:
            break
    f = rng.standard_normal(n)
    g = rng.standard_normal(n)
    if with_ties:
        f = np.round(f * 2.0) / 2.0
        g = np.round(g * 2.0) / 2.0
    return f, g, z, y
