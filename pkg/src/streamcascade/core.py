"""Domain types, routing and quality metrics shared by every cascade."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ScoredRecord:
    """One data item: proxy score, hidden oracle label and a fixed quantile."""

    id: int
    proxy_score: float
    oracle_label: int
    quantile: float

    def __post_init__(self):
        if self.id < 0:
            raise ValueError(f"record id must be non-negative, got {self.id}")
        if not 0.0 <= self.proxy_score <= 1.0:
            raise ValueError(f"proxy_score {self.proxy_score} outside [0, 1]")
        if self.oracle_label not in (0, 1):
            raise ValueError(f"oracle_label must be 0 or 1, got {self.oracle_label}")
        if not 0.0 <= self.quantile <= 1.0:
            raise ValueError(f"quantile {self.quantile} outside [0, 1]")


@dataclass(frozen=True)
class ThresholdPair:
    """Reject below ``low``, accept at or above ``high``, delegate in between."""

    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise ValueError(
                f"thresholds must satisfy 0 <= low <= high <= 1, got ({self.low}, {self.high})"
            )

    @property
    def width(self) -> float:
        return self.high - self.low


class Route(enum.IntEnum):
    """Region a record falls in.  Ordered so that routing is monotone in the score."""

    REJECT = 0
    DELEGATE = 1
    ACCEPT = 2


@dataclass(frozen=True)
class Decision:
    """Routing outcome.  ``predicted_label`` is ``None`` for a delegated record
    until the oracle (or a fallback rule) resolves it."""

    route: Route
    predicted_label: Optional[int] = None

    def __post_init__(self):
        if self.route is Route.REJECT and self.predicted_label != 0:
            raise ValueError("a rejected record must be predicted 0")
        if self.route is Route.ACCEPT and self.predicted_label != 1:
            raise ValueError("an accepted record must be predicted 1")


@dataclass(frozen=True)
class QualityTargets:
    t_p: float = 0.8
    t_r: float = 0.8
    delta: float = 0.2

    def __post_init__(self):
        for name in ("t_p", "t_r"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class ConfusionCounts:
    """Confusion counts.  Real valued so that expected counts fit too."""

    tp: float = 0.0
    fp: float = 0.0
    fn: float = 0.0
    tn: float = 0.0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @classmethod
    def from_labels(cls, predicted, actual) -> "ConfusionCounts":
        predicted = np.asarray(predicted, dtype=bool)
        actual = np.asarray(actual, dtype=bool)
        if predicted.shape != actual.shape:
            raise ValueError("predicted and actual labels differ in length")
        return cls(
            tp=float(np.sum(predicted & actual)),
            fp=float(np.sum(predicted & ~actual)),
            fn=float(np.sum(~predicted & actual)),
            tn=float(np.sum(~predicted & ~actual)),
        )


@dataclass(frozen=True)
class Metrics:
    precision: float = 0.0
    recall: float = 0.0
    f_beta: float = 0.0
    delegation_rate: float = 0.0


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def route(score: float, thresholds: ThresholdPair) -> Decision:
    """Place ``score`` in the reject, delegate or accept region.

    ``score < low`` rejects and ``score >= high`` accepts, so collapsed
    thresholds (``low == high``) leave no delegate region.
    """
    if score < thresholds.low:
        return Decision(Route.REJECT, 0)
    if score >= thresholds.high:
        return Decision(Route.ACCEPT, 1)
    return Decision(Route.DELEGATE, None)


def route_array(scores, thresholds: ThresholdPair) -> np.ndarray:
    """Vectorized :func:`route` returning ``Route`` codes as an int8 array."""
    scores = np.asarray(scores, dtype=float)
    out = np.full(scores.shape, Route.DELEGATE, dtype=np.int8)
    out[scores >= thresholds.high] = Route.ACCEPT
    out[scores < thresholds.low] = Route.REJECT
    return out


def compute_metrics(counts: ConfusionCounts, beta: float = 1.0) -> Metrics:
    """Precision, recall and F-beta with 0 for any zero-denominator ratio."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    b2 = beta * beta
    f_beta = _ratio((1 + b2) * precision * recall, b2 * precision + recall)
    return Metrics(precision=precision, recall=recall, f_beta=f_beta)


def delegation_rate(decisions: Sequence) -> float:
    """Fraction of decisions whose label came from the oracle.

    Accepts :class:`Decision` objects or raw :class:`Route` codes.
    """
    if len(decisions) == 0:
        raise ValueError("delegation rate of an empty decision sequence is undefined")
    codes = np.array(
        [d.route if isinstance(d, Decision) else d for d in decisions], dtype=np.int8
    )
    return float(np.mean(codes == Route.DELEGATE))


def expected_calibration_error(scores, labels, bins: int = 10) -> float:
    """Equal-width binned ECE over [0, 1]; empty bins contribute nothing."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise ValueError(
            f"scores and labels differ in length ({scores.size} vs {labels.size})"
        )
    if bins < 1:
        raise ValueError("bins must be >= 1")
    n = scores.size
    if n == 0:
        return 0.0
    idx = np.minimum((scores * bins).astype(int), bins - 1)
    count = np.bincount(idx, minlength=bins)
    score_sum = np.bincount(idx, weights=scores, minlength=bins)
    label_sum = np.bincount(idx, weights=labels, minlength=bins)
    occupied = count > 0
    gap = np.abs(score_sum[occupied] - label_sum[occupied]) / count[occupied]
    return float(np.sum(count[occupied] / n * gap))


@dataclass(frozen=True)
class Batch:
    """Columnar view of a run of records as seen by a cascade: ids, proxy
    scores and per-record quantiles.  Oracle labels are never included."""

    ids: np.ndarray
    scores: np.ndarray
    quantiles: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.size)

    @classmethod
    def from_records(cls, records: Sequence[ScoredRecord]) -> "Batch":
        return cls(
            ids=np.array([r.id for r in records], dtype=np.int64),
            scores=np.array([r.proxy_score for r in records], dtype=float),
            quantiles=np.array([r.quantile for r in records], dtype=float),
        )


@dataclass
class BatchDecisions:
    """Per-record outcome of one cascade step.

    ``routes`` holds the region each record fell in (``Route`` codes),
    ``sampled`` marks records drawn for oracle labeling and ``from_oracle``
    marks every record whose prediction is an oracle label (sampled or
    delegated).
    """

    ids: np.ndarray
    predicted: np.ndarray
    routes: np.ndarray
    sampled: np.ndarray
    from_oracle: np.ndarray

    @property
    def oracle_calls(self) -> int:
        return int(np.sum(self.from_oracle))

    @property
    def uncertain_fraction(self) -> float:
        return float(np.mean(self.routes == Route.DELEGATE)) if self.ids.size else 0.0

    def decisions(self) -> list[Decision]:
        out = []
        for r, p in zip(self.routes, self.predicted):
            rr = Route(int(r))
            out.append(Decision(rr, None if rr is Route.DELEGATE else int(p)))
        return out
