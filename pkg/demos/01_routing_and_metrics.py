"""Two-threshold routing and the quality metrics every cascade is scored with.

A record whose proxy score is below ``low`` is rejected, at or above ``high``
is accepted, and anything in between is delegated to the oracle.
"""
import numpy as np

from streamcascade.core import ConfusionCounts, ThresholdPair, compute_metrics, expected_calibration_error, route

thresholds = ThresholdPair(low=0.3, high=0.8)
for score in (0.1, 0.3, 0.55, 0.8, 0.95):
    d = route(score, thresholds)
    print(f"score {score:.2f} -> {d.route.name:8s} predicted label {d.predicted_label}")

counts = ConfusionCounts.from_labels(predicted=[1, 1, 0, 0, 1], actual=[1, 0, 0, 1, 1])
m = compute_metrics(counts, beta=1.0)
print(f"\nprecision {m.precision:.3f}  recall {m.recall:.3f}  F1 {m.f_beta:.3f}")

rng = np.random.default_rng(0)
s = rng.random(10_000)
calibrated = (rng.random(s.size) < s).astype(int)
overconfident = (rng.random(s.size) < 0.5 + 0.5 * (s - 0.5)).astype(int)
print(f"ECE of a calibrated scorer     {expected_calibration_error(s, calibrated):.4f}")
print(f"ECE of an overconfident scorer {expected_calibration_error(s, overconfident):.4f}")
