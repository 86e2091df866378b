"""Small shared numeric helpers."""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    # tanh form is overflow-free on both tails
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def log1pexp(x: np.ndarray | float) -> np.ndarray | float:
    """Numerically stable log(1 + exp(x))."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the average of their positions."""
    x = np.asarray(x)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg = upper - (counts - 1) / 2.0
    return avg[inverse]
