"""Calibration-driven streaming cascade.

Each record carries a fixed quantile ``q``.  Once a calibration model exists,
records are routed on the posterior draw ``sigmoid(f_hat(s) + Phi^-1(q) se(s))``,
so records whose scores are poorly calibrated spread out and land in the
uncertain region more often.  Oracle labels are drawn uniformly from the
uncertain region; the model and thresholds are refit only when the labeled
sample has doubled since the last fit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from streamcascade.calibration import SplineBasis, fit_bootstrap, fit_calibration
from streamcascade.core import Batch, BatchDecisions, Route, ScoredRecord, ThresholdPair
from streamcascade.optimize import DEConfig, optimize_thresholds

Oracle = Callable[[np.ndarray], np.ndarray]


class ScoreReservoir:
    """Uniform reservoir of (proxy score, quantile) pairs seen so far."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self.scores = np.empty(0)
        self.quantiles = np.empty(0)
        self.seen = 0

    def add(self, scores, quantiles) -> None:
        scores = np.asarray(scores, dtype=float)
        quantiles = np.asarray(quantiles, dtype=float)
        room = max(self.capacity - self.scores.size, 0)
        head = min(room, scores.size)
        if head:
            self.scores = np.r_[self.scores, scores[:head]]
            self.quantiles = np.r_[self.quantiles, quantiles[:head]]
        rest = np.arange(head, scores.size)
        if rest.size:
            slots = self.rng.integers(0, self.seen + rest + 1)
            for i, j in zip(rest, slots):
                if j < self.capacity:
                    self.scores[j] = scores[i]
                    self.quantiles[j] = quantiles[i]
        self.seen += scores.size


@dataclass
class GamCalState:
    """Mutable per-worker state of the calibration cascade."""

    alpha: float = 0.5
    beta: float = 1.0
    rho: float = 0.1
    n_min: int = 5
    lam: float = 0.1
    seed: int = 0
    sub_batch: Optional[int] = None
    calibrator: str = "laplace"
    bootstrap_members: int = 100
    basis: SplineBasis = field(default_factory=SplineBasis)
    de: DEConfig = field(default_factory=DEConfig)
    reservoir_size: int = 100_000
    sample_scores: list = field(default_factory=list)
    sample_labels: list = field(default_factory=list)
    n_last: int = 0
    model: object = None
    thresholds: ThresholdPair = field(default_factory=ThresholdPair)
    history: list = field(default_factory=list)
    retrain_events: list = field(default_factory=list)
    batches_seen: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if self.n_min < 1:
            raise ValueError("n_min must be >= 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.calibrator not in ("laplace", "bootstrap"):
            raise ValueError(f"unknown calibrator {self.calibrator!r}")
        self.rng = np.random.default_rng(self.seed)
        self.reservoir = ScoreReservoir(self.reservoir_size, np.random.default_rng([self.seed, 1]))

    @property
    def cold_start(self) -> bool:
        return self.model is None

    @property
    def sample_size(self) -> int:
        return len(self.sample_labels)


def calibrated_score(state: GamCalState, record):
    """Routing score: the raw proxy score during cold start, else the
    posterior draw at the record's fixed quantile."""
    if isinstance(record, ScoredRecord):
        scores, quantiles = record.proxy_score, record.quantile
    elif isinstance(record, Batch):
        scores, quantiles = record.scores, record.quantiles
    else:
        scores, quantiles = record
    if state.cold_start:
        return scores if np.ndim(scores) == 0 else np.asarray(scores, dtype=float).copy()
    out = state.model.stochastic_score(scores, quantiles)
    return float(np.asarray(out).ravel()[0]) if np.ndim(scores) == 0 else np.asarray(out)


def should_retrain(state: GamCalState) -> bool:
    n = state.sample_size
    pos = int(np.sum(state.sample_labels))
    return n >= 2 * state.n_last and min(pos, n - pos) >= state.n_min


def uniform_uncertain_sample(g, thresholds: ThresholdPair, budget: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw without replacement of ``min(budget, |U|)`` indices from
    the uncertain region ``U = {i : low <= g_i < high}``."""
    g = np.asarray(g, dtype=float)
    uncertain = np.nonzero((g >= thresholds.low) & (g < thresholds.high))[0]
    k = min(budget, uncertain.size)
    if k == 0:
        return np.empty(0, dtype=np.intp)
    return np.sort(rng.choice(uncertain, size=k, replace=False))


def retrain(state: GamCalState) -> None:
    """Refit calibration on the whole sample and re-optimize thresholds over
    the reservoir's calibrated scores."""
    scores = np.asarray(state.sample_scores, dtype=float)
    labels = np.asarray(state.sample_labels, dtype=float)
    event = len(state.retrain_events)
    if state.calibrator == "bootstrap":
        state.model = fit_bootstrap(
            scores, labels, state.bootstrap_members, state.lam, state.basis,
            np.random.default_rng([state.seed, 2, event]),
        )
    else:
        state.model = fit_calibration(scores, labels, state.lam, state.basis)
    pool = state.model.stochastic_score(state.reservoir.scores, state.reservoir.quantiles)
    de = replace(state.de, seed=int(np.random.SeedSequence([state.seed, 3, event]).generate_state(1)[0]))
    state.thresholds = optimize_thresholds(pool, state.alpha, state.beta, de)
    state.n_last = state.sample_size
    state.retrain_events.append((state.batches_seen, state.sample_size, state.thresholds))


def gamcal_step(state: GamCalState, batch: Batch, oracle: Oracle):
    """Process one batch: sample the uncertain region, retrain on the doubling
    schedule, then classify.  Mutates and returns ``state``."""
    m = len(batch)
    if m < 1:
        raise ValueError("batch must contain at least one record")
    g = calibrated_score(state, batch)
    budget = int(math.floor(state.rho * m))
    picked = uniform_uncertain_sample(g, state.thresholds, budget, state.rng)
    labels = np.asarray(oracle(batch.ids[picked]), dtype=np.int64) if picked.size else np.empty(0, np.int64)
    state.reservoir.add(batch.scores, batch.quantiles)
    step = state.sub_batch or max(picked.size, 1)
    retrained = False
    for start in range(0, max(picked.size, 1), step):
        idx = picked[start:start + step]
        state.sample_scores.extend(batch.scores[idx].tolist())
        state.sample_labels.extend(labels[start:start + step].tolist())
        if should_retrain(state):
            retrain(state)
            retrained = True
    if retrained:
        g = calibrated_score(state, batch)
    thr = state.thresholds
    routes = np.full(m, Route.DELEGATE, dtype=np.int8)
    routes[g >= thr.high] = Route.ACCEPT
    routes[g < thr.low] = Route.REJECT
    predicted = np.where(routes == Route.ACCEPT, 1, 0).astype(np.int64)
    uncertain = routes == Route.DELEGATE
    predicted[uncertain] = (g[uncertain] >= 0.5).astype(np.int64)
    sampled = np.zeros(m, dtype=bool)
    sampled[picked] = True
    predicted[picked] = labels
    state.history.append((state.batches_seen, thr))
    state.batches_seen += 1
    return state, BatchDecisions(batch.ids.copy(), predicted, routes, sampled, sampled.copy())
