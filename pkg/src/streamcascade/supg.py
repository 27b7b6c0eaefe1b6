"""Statistical threshold estimation and the SUPG-family streaming cascades.

Three algorithms share the machinery here:

* ``supg_it_step``: iterative two-threshold cascade.  Oracle samples
  accumulate across batches and both thresholds are re-estimated after every
  sub-batch of labels.
* ``supg_sp_step``: the same joint targeting estimated from the current
  batch's sample only.
* ``supg_base_step``: recall-only, single-threshold cascade with no uncertain
  region.

Recall curves use Horvitz-Thompson corrected labels; precision curves use
raw labels, since the corrections roughly cancel in a ratio over the same
sub-population.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from streamcascade.core import Batch, BatchDecisions, QualityTargets, Route, ThresholdPair
from streamcascade.sampling import ht_correction, mixing_weights, weighted_sample_without_replacement

Oracle = Callable[[np.ndarray], np.ndarray]

# relative slack for comparing a recomputed TPR against its target
_TPR_EPS = 1e-12


class NoPositiveSamples(ValueError):
    """Raised when a recall curve is requested from a sample without positives."""


class ResidualStrategy(str, enum.Enum):
    DELEGATE_ALL = "delegate_all"
    FALLBACK_THRESHOLD = "fallback_threshold"


@dataclass(frozen=True)
class LabeledObservation:
    proxy_score: float
    label: int
    correction: float


class AccumulatedSample:
    """Growable store of oracle-labeled observations and their HT corrections."""

    def __init__(self):
        self._scores: list[float] = []
        self._labels: list[int] = []
        self._corrections: list[float] = []
        self.sampled_ids: set[int] = set()
        self._cache = None

    def __len__(self) -> int:
        return len(self._scores)

    def add(self, record_id: int, proxy_score: float, label: int, correction: float) -> None:
        record_id = int(record_id)
        if record_id in self.sampled_ids:
            raise ValueError(f"record {record_id} already sampled")
        if correction <= 0:
            raise ValueError("correction factors must be positive")
        self.sampled_ids.add(record_id)
        self._scores.append(float(proxy_score))
        self._labels.append(int(label))
        self._corrections.append(float(correction))
        self._cache = None

    def extend(self, ids, scores, labels, corrections) -> None:
        for i, s, y, c in zip(ids, scores, labels, corrections):
            self.add(i, s, y, c)

    @classmethod
    def from_arrays(cls, scores, labels, corrections=None, ids=None) -> "AccumulatedSample":
        scores = np.asarray(scores, dtype=float)
        if corrections is None:
            corrections = np.ones_like(scores)
        if ids is None:
            ids = np.arange(scores.size)
        out = cls()
        out.extend(ids, scores, labels, corrections)
        return out

    @property
    def observations(self) -> list[LabeledObservation]:
        return [
            LabeledObservation(s, y, c)
            for s, y, c in zip(self._scores, self._labels, self._corrections)
        ]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self._cache is None:
            self._cache = (
                np.asarray(self._scores, dtype=float),
                np.asarray(self._labels, dtype=float),
                np.asarray(self._corrections, dtype=float),
            )
        return self._cache

    @property
    def has_positives(self) -> bool:
        return any(self._labels)


def _bound_width(sigma, s, delta):
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if np.any(np.asarray(s) < 1):
        raise ValueError("sample count must be >= 1")
    return np.asarray(sigma) / np.sqrt(s) * math.sqrt(2.0 * math.log(1.0 / delta))


def ub(mu, sigma, s, delta):
    """Upper confidence bound ``mu + sigma/sqrt(s) * sqrt(2 ln(1/delta))``."""
    out = np.asarray(mu) + _bound_width(sigma, s, delta)
    return float(out) if np.ndim(out) == 0 else out


def lb(mu, sigma, s, delta):
    """Lower confidence bound ``mu - sigma/sqrt(s) * sqrt(2 ln(1/delta))``."""
    out = np.asarray(mu) - _bound_width(sigma, s, delta)
    return float(out) if np.ndim(out) == 0 else out


def _descending_curves(sample: AccumulatedSample):
    """Unique scores (descending) with cumulative statistics at each threshold.

    For candidate ``tau = u[k]`` the returned arrays give, over observations
    with score >= tau: the count, the raw positive count and the corrected
    positive mass.
    """
    scores, labels, corr = sample.arrays()
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    cum_n = np.arange(1, s_sorted.size + 1, dtype=float)
    cum_pos = np.cumsum(labels[order])
    cum_cpos = np.cumsum((corr * labels)[order])
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], s_sorted.size - 1]
    return s_sorted[last], cum_n[last], cum_pos[last], cum_cpos[last]


def _total_positive_mass(sample: AccumulatedSample) -> float:
    _, labels, corr = sample.arrays()
    total = float(np.sum(corr * labels))
    if total <= 0:
        raise NoPositiveSamples("sample contains no positive observations")
    return total


def weighted_tpr(sample: AccumulatedSample, tau: float) -> float:
    """Correction-weighted true positive rate of the rule ``score >= tau``."""
    total = _total_positive_mass(sample)
    u, _, _, cum_cpos = _descending_curves(sample)
    # u is descending; count the candidates at or above tau
    k = int(np.searchsorted(-u, -tau, side="right"))
    return float(cum_cpos[k - 1] / total) if k else 0.0


def recall_threshold(sample: AccumulatedSample, target: float) -> float:
    """Largest candidate threshold whose weighted TPR reaches ``target``.

    Candidates are the observed scores plus 0.
    """
    total = _total_positive_mass(sample)
    u, _, _, cum_cpos = _descending_curves(sample)
    ok = cum_cpos >= target * total * (1.0 - _TPR_EPS)
    if not np.any(ok):
        return 0.0
    # u is descending and TPR non-increasing in tau, so the first hit is the largest tau
    return float(u[np.argmax(ok)])


def precision_threshold(sample: AccumulatedSample, t_p: float, delta: float) -> float:
    """Smallest candidate threshold whose precision lower bound reaches ``t_p``.

    The failure probability is Bonferroni-split over the sample size.  Returns
    1.0 (empty accept region) when no candidate qualifies.
    """
    if len(sample) == 0:
        raise ValueError("precision threshold needs a non-empty sample")
    u, cum_n, cum_pos, _ = _descending_curves(sample)
    mu = cum_pos / cum_n
    sigma = np.sqrt(np.clip(mu * (1.0 - mu), 0.0, None))
    bound = lb(mu, sigma, cum_n, delta / len(sample))
    ok = np.asarray(bound) >= t_p
    if not np.any(ok):
        return 1.0
    return float(np.min(u[ok]))


def corrected_recall_target(
    sample: AccumulatedSample,
    tau_low_hat: float,
    targets: QualityTargets,
    clip_delta: float,
) -> float:
    """Recall target inflated for sampling uncertainty, clipped to
    ``[t_R, t_R + clip_delta]``."""
    _total_positive_mass(sample)
    scores, labels, corr = sample.arrays()
    s = scores.size
    mass = corr * labels
    above = scores >= tau_low_hat
    z1 = np.where(above, mass, 0.0)
    z2 = np.where(above, 0.0, mass)
    d = targets.delta / 2.0
    upper = ub(z1.mean(), z1.std(), s, d)
    lower = max(lb(z2.mean(), z2.std(), s, d), 0.0)
    t_r = targets.t_r
    den = upper + lower
    if den <= 0:
        return t_r + clip_delta
    return float(np.clip(upper / den, t_r, t_r + clip_delta))


def _pr_curves(sample: AccumulatedSample):
    total = _total_positive_mass(sample)
    u, cum_n, cum_pos, cum_cpos = _descending_curves(sample)
    return u, cum_pos / cum_n, cum_cpos / total


def balanced_threshold(sample: AccumulatedSample, targets: QualityTargets) -> float:
    """Single threshold whose recall/precision ratio best matches ``t_R / t_P``.

    Ties go to the larger threshold; candidates with zero precision are skipped.
    """
    u, precision, recall = _pr_curves(sample)
    keep = precision > 0
    if not np.any(keep):
        raise NoPositiveSamples("no candidate threshold has positive precision")
    gap = np.abs(recall[keep] / precision[keep] - targets.t_r / targets.t_p)
    # u is descending, argmin returns the first (largest) tau among ties
    return float(u[keep][np.argmin(gap)])


def best_f1_threshold(sample: AccumulatedSample) -> float:
    """Threshold maximizing sample F1 (raw precision, corrected recall)."""
    u, precision, recall = _pr_curves(sample)
    den = precision + recall
    f1 = np.divide(2 * precision * recall, den, out=np.zeros_like(den), where=den > 0)
    return float(u[np.argmax(f1)])


@dataclass
class SupgItState:
    """Mutable per-worker state shared by the three SUPG-family cascades."""

    targets: QualityTargets = field(default_factory=QualityTargets)
    eta: float = 0.5
    rho: float = 0.1
    clip_delta: float = 0.05
    residual_strategy: ResidualStrategy = ResidualStrategy.DELEGATE_ALL
    sub_batch: Optional[int] = 128
    seed: int = 0
    sample: AccumulatedSample = field(default_factory=AccumulatedSample)
    thresholds: ThresholdPair = field(default_factory=ThresholdPair)
    history: list = field(default_factory=list)
    collapses: int = 0
    batches_seen: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.clip_delta < 0:
            raise ValueError("clip_delta must be non-negative")
        self.residual_strategy = ResidualStrategy(self.residual_strategy)
        self.rng = np.random.default_rng(self.seed)


def joint_thresholds(
    sample: AccumulatedSample, targets: QualityTargets, clip_delta: float
) -> tuple[ThresholdPair, bool]:
    """Two-threshold estimate from a sample.  Returns the pair and whether the
    precision/recall conflict forced a collapse to the balanced threshold."""
    tau_hat = recall_threshold(sample, targets.t_r)
    target = corrected_recall_target(sample, tau_hat, targets, clip_delta)
    low = recall_threshold(sample, target)
    high = precision_threshold(sample, targets.t_p, targets.delta)
    if high < low:
        t = balanced_threshold(sample, targets)
        return ThresholdPair(t, t), True
    return ThresholdPair(low, high), False


def recall_only_threshold(sample: AccumulatedSample, targets: QualityTargets) -> ThresholdPair:
    """Single corrected-recall threshold without target clipping."""
    tau_hat = recall_threshold(sample, targets.t_r)
    target = corrected_recall_target(sample, tau_hat, targets, clip_delta=1.0)
    t = recall_threshold(sample, target)
    return ThresholdPair(t, t)


def _sample_batch(state: SupgItState, batch: Batch, sample: AccumulatedSample):
    """Draw ``floor(rho * |B|)`` records from the not-yet-sampled pool."""
    if len(batch) < 1:
        raise ValueError("batch must contain at least one record")
    pool = np.array([i not in sample.sampled_ids for i in batch.ids.tolist()], dtype=bool)
    pool_idx = np.nonzero(pool)[0]
    k = min(int(math.floor(state.rho * len(batch))), pool_idx.size)
    if pool_idx.size == 0:
        return pool_idx, np.empty(0)
    w = mixing_weights(batch.scores[pool_idx], state.eta)
    pick = weighted_sample_without_replacement(w, k, state.rng)
    corrections = ht_correction(w[pick], pool_idx.size) if k else np.empty(0)
    return pool_idx[pick], np.atleast_1d(corrections)


def _supg_step(state: SupgItState, batch: Batch, oracle: Oracle, *, accumulate: bool, joint: bool):
    sample = state.sample if accumulate else AccumulatedSample()
    picked, corrections = _sample_batch(state, batch, sample)
    labels = np.asarray(oracle(batch.ids[picked]), dtype=np.int64) if picked.size else np.empty(0, np.int64)
    step = state.sub_batch or max(picked.size, 1)
    t = state.batches_seen
    for start in range(0, max(picked.size, 1), step):
        sl = slice(start, start + step)
        idx = picked[sl]
        sample.extend(batch.ids[idx], batch.scores[idx], labels[sl], corrections[sl])
        if sample.has_positives:
            if joint:
                pair, collapsed = joint_thresholds(sample, state.targets, state.clip_delta)
                state.collapses += int(collapsed)
            else:
                pair = recall_only_threshold(sample, state.targets)
            state.thresholds = pair
        state.history.append((t, start // step, state.thresholds))
    if accumulate:
        state.sample = sample
    state.batches_seen += 1
    return _classify(state, batch, oracle, picked, labels, sample, joint)


def _classify(state, batch, oracle, picked, labels, sample, joint) -> BatchDecisions:
    m = len(batch)
    thr = state.thresholds
    routes = np.full(m, Route.DELEGATE, dtype=np.int8)
    routes[batch.scores >= thr.high] = Route.ACCEPT
    routes[batch.scores < thr.low] = Route.REJECT
    predicted = (routes == Route.ACCEPT).astype(np.int64)
    sampled = np.zeros(m, dtype=bool)
    sampled[picked] = True
    predicted[picked] = labels
    from_oracle = sampled.copy()
    residual = (routes == Route.DELEGATE) & ~sampled
    if np.any(residual):
        if state.residual_strategy is ResidualStrategy.DELEGATE_ALL:
            predicted[residual] = np.asarray(oracle(batch.ids[residual]), dtype=np.int64)
            from_oracle |= residual
        else:
            tau_mid = best_f1_threshold(sample) if sample.has_positives else 0.5
            predicted[residual] = (batch.scores[residual] >= tau_mid).astype(np.int64)
    return BatchDecisions(batch.ids.copy(), predicted, routes, sampled, from_oracle)


def supg_it_step(state: SupgItState, batch: Batch, oracle: Oracle):
    """One batch of the iterative joint-target cascade.

    Samples ``floor(rho * |B|)`` unsampled records with defensive importance
    weights, adds them to the accumulated sample, refreshes both thresholds
    after every ``sub_batch`` labels (collapsing to a balanced threshold on
    conflict) and classifies the batch.  Mutates and returns ``state``.
    """
    return state, _supg_step(state, batch, oracle, accumulate=True, joint=True)


def supg_sp_step(state: SupgItState, batch: Batch, oracle: Oracle):
    """Joint-target cascade estimated from the current batch's sample alone."""
    return state, _supg_step(state, batch, oracle, accumulate=False, joint=True)


def supg_base_step(state: SupgItState, batch: Batch, oracle: Oracle):
    """Recall-only cascade: one corrected recall threshold, no uncertain region."""
    return state, _supg_step(state, batch, oracle, accumulate=False, joint=False)
