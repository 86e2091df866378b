"""Score-function models and their gradient machinery.

Two architectures share one flat-parameter interface: a linear scorer
f(x) = w.x + b and a one-hidden-layer ReLU network with a hidden width equal
to the input width. Objectives are evaluated in score space; backprop maps a
d(objective)/d(scores) vector to a flat parameter gradient, so every
objective in the package only has to know about scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._stats import log1pexp, sigmoid
from .errors import DimensionError, NonFiniteError

KINDS = ("linear", "mlp")


def n_params(kind: str, p: int) -> int:
    if kind == "linear":
        return p + 1
    if kind == "mlp":
        return p * p + p + p + 1
    raise DimensionError(f"unknown model kind {kind!r}")


@dataclass(frozen=True)
class Model:
    """Immutable flat-parameter model.

    linear : params = [w (p), b]
    mlp    : params = [W1 (p*p, row-major), b1 (p), w2 (p), b2]
    """

    kind: str
    p: int
    params: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DimensionError(f"unknown model kind {self.kind!r}")
        if self.p < 1:
            raise DimensionError("p must be >= 1")
        params = np.ascontiguousarray(np.asarray(self.params, dtype=np.float64))
        want = n_params(self.kind, self.p)
        if params.shape != (want,):
            raise DimensionError(
                f"{self.kind} model with p={self.p} needs {want} params, "
                f"got shape {params.shape}"
            )
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    def unpack(self):
        if self.kind == "linear":
            return self.params[: self.p], float(self.params[self.p])
        p = self.p
        W1 = self.params[: p * p].reshape(p, p)
        b1 = self.params[p * p: p * p + p]
        w2 = self.params[p * p + p: p * p + 2 * p]
        b2 = float(self.params[-1])
        return W1, b1, w2, b2

    def replace_params(self, params: np.ndarray) -> "Model":
        return Model(kind=self.kind, p=self.p, params=params)


def init(kind: str, p: int, seed: int) -> Model:
    """Fresh model: zeros for linear; uniform(+-1/sqrt(fan_in)) weights and
    zero biases for the network."""
    if kind == "linear":
        return Model(kind=kind, p=p, params=np.zeros(p + 1))
    if kind == "mlp":
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(p)
        params = np.zeros(n_params(kind, p))
        params[: p * p] = rng.uniform(-bound, bound, size=p * p)
        params[p * p + p: p * p + 2 * p] = rng.uniform(-bound, bound, size=p)
        return Model(kind=kind, p=p, params=params)
    raise DimensionError(f"unknown model kind {kind!r}")


def forward(kind: str, p: int, params: np.ndarray, X: np.ndarray):
    """Scores for a batch, plus the cache backprop needs."""
    if X.ndim != 2 or X.shape[1] != p:
        raise DimensionError(f"expected batch of width {p}, got shape {X.shape}")
    if kind == "linear":
        w, b = params[:p], params[p]
        return X @ w + b, None
    W1 = params[: p * p].reshape(p, p)
    b1 = params[p * p: p * p + p]
    w2 = params[p * p + p: p * p + 2 * p]
    b2 = params[-1]
    hidden_pre = X @ W1.T + b1
    hidden = np.maximum(hidden_pre, 0.0)
    return hidden @ w2 + b2, (hidden, hidden_pre > 0.0)


def backprop(kind: str, p: int, params: np.ndarray, X: np.ndarray,
             dscores: np.ndarray, cache) -> np.ndarray:
    """Flat parameter gradient given d(objective)/d(scores)."""
    if kind == "linear":
        grad = np.empty(p + 1)
        grad[:p] = X.T @ dscores
        grad[p] = dscores.sum()
        return grad
    hidden, active = cache
    w2 = params[p * p + p: p * p + 2 * p]
    dhidden = np.outer(dscores, w2)
    dhidden[~active] = 0.0
    grad = np.empty(n_params(kind, p))
    grad[: p * p] = (dhidden.T @ X).ravel()
    grad[p * p: p * p + p] = dhidden.sum(axis=0)
    grad[p * p + p: p * p + 2 * p] = hidden.T @ dscores
    grad[-1] = dscores.sum()
    return grad


def score(model: Model, x: np.ndarray):
    """Score one row (float) or a batch (vector)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    s, _ = forward(model.kind, model.p, model.params, x)
    return float(s[0]) if single else s


@dataclass
class GradientBundle:
    value: float
    grad: np.ndarray


class CrossEntropy:
    """Mean binary cross-entropy of sigmoid(score) against 0/1 labels."""

    name = "cross_entropy"

    def __init__(self, labels: np.ndarray):
        self.labels = np.asarray(labels, dtype=np.float64)
        if self.labels.ndim != 1:
            raise DimensionError("labels must be 1-D")

    def value_and_grad(self, scores: np.ndarray):
        y = self.labels
        if scores.shape != y.shape:
            raise DimensionError("scores/labels length mismatch")
        n = y.shape[0]
        value = float(np.mean(log1pexp(scores) - y * scores))
        dscores = (sigmoid(scores) - y) / n
        return value, dscores

    def kink_margin(self, scores: np.ndarray) -> float:
        return math.inf


def objective_gradient(model: Model, objective, batch) -> GradientBundle:
    """Value and flat gradient of `objective` at `model` on `batch.features`.

    `objective` is any score-space term exposing value_and_grad(scores).
    Non-finite results raise, naming the offending term.
    """
    X = batch.features
    scores, cache = forward(model.kind, model.p, model.params, X)
    value, dscores = objective.value_and_grad(scores)
    grad = backprop(model.kind, model.p, model.params, X, dscores, cache)
    if not (math.isfinite(value) and np.all(np.isfinite(grad))):
        raise NonFiniteError(f"objective {objective.name!r} produced a non-finite result")
    return GradientBundle(value=value, grad=grad)
