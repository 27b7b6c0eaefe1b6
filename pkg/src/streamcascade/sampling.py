"""Batch-local importance sampling with defensive mixing.

Weights are normalized over the current batch only, so a worker never needs
a pass over the whole dataset before it can start sampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WeightedDraw:
    index: int
    weight: float
    correction: float


def mixing_weights(scores, eta: float) -> np.ndarray:
    """Blend sqrt-score importance weights with a uniform floor.

    ``w_i = eta * sqrt(s_i) / sum_j sqrt(s_j) + (1 - eta) / m``.  A batch of
    all-zero scores gets a uniform importance term.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot compute weights for an empty batch")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    if np.any((scores < 0) | (scores > 1)):
        raise ValueError("scores must lie in [0, 1]")
    m = scores.size
    root = np.sqrt(scores)
    total = root.sum()
    importance = root / total if total > 0 else np.full(m, 1.0 / m)
    return eta * importance + (1.0 - eta) / m


def weighted_sample_without_replacement(weights, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential draw-and-renormalize sampling of ``k`` distinct indices.

    Returned in draw order.  Equivalent to successive categorical draws with
    already-drawn indices removed; implemented with the exponential-race
    trick (sort ``E_i / w_i`` ascending), which has exactly that law.
    """
    weights = np.asarray(weights, dtype=float)
    m = weights.size
    if k < 0 or k > m:
        raise ValueError(f"cannot draw {k} items without replacement from {m}")
    if k == 0:
        return np.empty(0, dtype=np.intp)
    keys = rng.exponential(size=m)
    with np.errstate(divide="ignore"):
        keys = np.where(weights > 0, keys / weights, np.inf)
    order = np.argsort(keys, kind="stable")
    return order[:k]


def ht_correction(weight, m: int):
    """Inverse-probability correction ``(1/m) / w`` relative to uniform sampling."""
    weight = np.asarray(weight, dtype=float)
    if m < 1:
        raise ValueError("batch size m must be >= 1")
    if np.any(weight <= 0):
        raise ValueError("correction undefined for a non-positive weight")
    out = (1.0 / m) / weight
    return float(out) if out.ndim == 0 else out


def draw(scores, k: int, eta: float, rng: np.random.Generator) -> list[WeightedDraw]:
    """Weights, a without-replacement sample and its corrections in one call."""
    w = mixing_weights(scores, eta)
    idx = weighted_sample_without_replacement(w, k, rng)
    c = ht_correction(w[idx], w.size) if idx.size else np.empty(0)
    return [WeightedDraw(int(i), float(w[i]), float(ci)) for i, ci in zip(idx, np.atleast_1d(c))]
