"""Streaming two-threshold model cascades.

Routes records between a cheap proxy scorer and an expensive oracle with two
adaptive thresholds.  Two algorithm families are provided: an iterative,
importance-sampled statistical cascade with joint precision/recall targets
(``supg``) and a calibration-driven cascade that optimizes a cost/quality
tradeoff (``gamcal``).
"""
from streamcascade.core import (
    ConfusionCounts,
    Decision,
    Metrics,
    QualityTargets,
    Route,
    ScoredRecord,
    ThresholdPair,
    compute_metrics,
    delegation_rate,
    expected_calibration_error,
    route,
)

__version__ = "0.1.0"

__all__ = [
    "ConfusionCounts",
    "Decision",
    "Metrics",
    "QualityTargets",
    "Route",
    "ScoredRecord",
    "ThresholdPair",
    "compute_metrics",
    "delegation_rate",
    "expected_calibration_error",
    "route",
]
