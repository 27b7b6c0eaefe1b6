"""Expected cascade quality from calibrated scores, and threshold search.

Given calibrated scores ``g_i`` (each the probability that record ``i`` is
positive), the expected confusion matrix of any threshold pair is a sum over
regions, so the cost/quality objective can be evaluated for any pair without
further oracle calls.  The objective is piecewise constant in the thresholds,
which is why the search uses differential evolution rather than gradients.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from streamcascade.core import ConfusionCounts, ThresholdPair


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 30
    mutation_factor: float = 0.8
    crossover_rate: float = 0.9
    max_generations: int = 200
    seed: int = 0
    convergence_tolerance: float = 1e-10

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        if not 0.0 < self.mutation_factor < 2.0:
            raise ValueError("mutation_factor must lie in (0, 2)")
        if not 0.0 < self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must lie in (0, 1]")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")


def expected_confusion(scores, thresholds: ThresholdPair) -> ConfusionCounts:
    """Expected confusion counts when each record is positive with probability ``g_i``.

    Accepted and delegated records contribute expected true positives,
    accepted ones also expected false positives, rejected ones expected false
    negatives (and true negatives).
    """
    g = np.asarray(scores, dtype=float)
    kept = g >= thresholds.low
    accepted = g >= thresholds.high
    rejected = ~kept
    return ConfusionCounts(
        tp=float(np.sum(g[kept])),
        fp=float(np.sum(1.0 - g[accepted])),
        fn=float(np.sum(g[rejected])),
        tn=float(np.sum(1.0 - g[rejected])),
    )


def expected_fbeta(counts: ConfusionCounts, beta: float = 1.0) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if counts.tp <= 0:
        return 0.0
    b2 = beta * beta
    num = (1 + b2) * counts.tp
    return num / (num + counts.fn + b2 * counts.fp)


def objective(scores, thresholds: ThresholdPair, alpha: float, beta: float = 1.0) -> float:
    """``alpha * normalized error + (1 - alpha) * delegation rate``.

    The error ``1 - E[F_beta]`` is divided by the error of the no-delegation
    cascade at (0.5, 0.5); a zero baseline error makes the error term 0.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    g = np.asarray(scores, dtype=float)
    base_err = 1.0 - expected_fbeta(expected_confusion(g, ThresholdPair(0.5, 0.5)), beta)
    err = 1.0 - expected_fbeta(expected_confusion(g, thresholds), beta)
    norm_err = err / base_err if base_err > 0 else 0.0
    delegated = np.sum((g >= thresholds.low) & (g < thresholds.high)) / g.size
    return float(alpha * norm_err + (1.0 - alpha) * delegated)


def reparameterize(y1, y2):
    """Map the unit square onto ordered threshold pairs: ``low = y1``,
    ``high = y1 + (1 - y1) * y2``."""
    if np.ndim(y1) == 0 and np.ndim(y2) == 0:
        if not (0.0 <= y1 <= 1.0 and 0.0 <= y2 <= 1.0):
            raise ValueError("y1 and y2 must lie in [0, 1]")
        high = min(y1 + (1.0 - y1) * y2, 1.0)
        return ThresholdPair(float(y1), float(max(high, y1)))
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    return y1, np.clip(y1 + (1.0 - y1) * y2, y1, 1.0)


class CascadeObjective:
    """Vectorized objective over many threshold pairs for a fixed score set.

    Sorting once and keeping prefix sums makes each evaluation two binary
    searches.
    """

    def __init__(self, scores, alpha: float, beta: float = 1.0):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        g = np.sort(np.asarray(scores, dtype=float))
        if g.size == 0:
            raise ValueError("need at least one score")
        self.g = g
        self.n = g.size
        self.alpha = alpha
        self.b2 = beta * beta
        self._cum_g = np.r_[0.0, np.cumsum(g)]
        self._cum_ng = np.r_[0.0, np.cumsum(1.0 - g)]
        base = float(self.error(np.array([0.5]), np.array([0.5]))[0])
        self.base_error = base

    def error(self, low, high) -> np.ndarray:
        i = np.searchsorted(self.g, low, side="left")
        j = np.searchsorted(self.g, high, side="left")
        tp = self._cum_g[-1] - self._cum_g[i]
        fn = self._cum_g[i]
        fp = self._cum_ng[-1] - self._cum_ng[j]
        num = (1 + self.b2) * tp
        den = num + fn + self.b2 * fp
        f = np.divide(num, den, out=np.zeros_like(num), where=(tp > 0) & (den > 0))
        return 1.0 - f

    def __call__(self, low, high) -> np.ndarray:
        low = np.atleast_1d(np.asarray(low, dtype=float))
        high = np.atleast_1d(np.asarray(high, dtype=float))
        err = self.error(low, high)
        norm_err = err / self.base_error if self.base_error > 0 else np.zeros_like(err)
        i = np.searchsorted(self.g, low, side="left")
        j = np.searchsorted(self.g, high, side="left")
        delegated = np.maximum(j - i, 0) / self.n
        return self.alpha * norm_err + (1.0 - self.alpha) * delegated

    def on_unit_square(self, y: np.ndarray) -> np.ndarray:
        low, high = reparameterize(y[:, 0], y[:, 1])
        return self(low, high)

    def polish(self, low: float, high: float, max_rounds: int = 50) -> tuple[float, float, float]:
        """Alternate exact line searches over the score breakpoints.

        With one threshold fixed, the objective only changes where the other
        crosses an observed score, so each coordinate step is exhaustive.
        Never returns a worse point than the one given.
        """
        cand = np.r_[self.g, 1.0]
        value = float(self(low, high)[0])
        for _ in range(max_rounds):
            hs = cand[cand >= low]
            vh = self(np.full(hs.size, low), hs)
            k = int(np.argmin(vh))
            if vh[k] < value:
                high, value = float(hs[k]), float(vh[k])
            ls = cand[cand <= high]
            vl = self(ls, np.full(ls.size, high))
            k = int(np.argmin(vl))
            if vl[k] < value:
                low, value = float(ls[k]), float(vl[k])
                continue
            break
        return low, high, value


def differential_evolution(
    f: Callable[[np.ndarray], np.ndarray],
    config: DEConfig = DEConfig(),
    *,
    vectorized: bool = True,
):
    """DE/rand/1/bin over ``[0, 1]^2``.

    ``f`` maps an ``(N, 2)`` array to ``N`` objective values (or a single
    point to a scalar when ``vectorized`` is False).  Each generation builds
    ``a + F (b - c)`` from three distinct other members, clips it to the
    square, applies binomial crossover and keeps the trial when it is no
    worse.  Stops after ``max_generations`` or once the population's
    objective spread drops below the tolerance.  Returns ``(y1, y2, value)``.
    """
    rng = np.random.default_rng(config.seed)
    NP, dim = config.population_size, 2
    evaluate = f if vectorized else (lambda pts: np.array([f(p) for p in pts], dtype=float))
    pop = rng.random((NP, dim))
    fit = np.asarray(evaluate(pop), dtype=float)
    others = np.array([[j for j in range(NP) if j != i] for i in range(NP)])
    for _ in range(config.max_generations):
        if fit.max() - fit.min() < config.convergence_tolerance:
            break
        pick = np.array([rng.choice(others[i], 3, replace=False) for i in range(NP)])
        a, b, c = pop[pick[:, 0]], pop[pick[:, 1]], pop[pick[:, 2]]
        mutant = np.clip(a + config.mutation_factor * (b - c), 0.0, 1.0)
        cross = rng.random((NP, dim)) < config.crossover_rate
        cross[np.arange(NP), rng.integers(0, dim, NP)] = True
        trial = np.where(cross, mutant, pop)
        trial_fit = np.asarray(evaluate(trial), dtype=float)
        better = trial_fit <= fit
        pop[better] = trial[better]
        fit[better] = trial_fit[better]
    best = int(np.argmin(fit))
    return float(pop[best, 0]), float(pop[best, 1]), float(fit[best])


def optimize_thresholds(
    scores,
    alpha: float,
    beta: float = 1.0,
    config: DEConfig = DEConfig(),
    *,
    polish: bool = True,
) -> ThresholdPair:
    """Thresholds minimizing the cost/quality objective for calibrated ``scores``.

    Differential evolution over the reparameterized square, then (by default)
    an exact coordinate polish from the DE winner.
    """
    obj = CascadeObjective(scores, alpha, beta)
    y1, y2, _ = differential_evolution(obj.on_unit_square, config)
    pair = reparameterize(y1, y2)
    if polish:
        low, high, _ = obj.polish(pair.low, pair.high)
        pair = ThresholdPair(low, high)
    return pair
