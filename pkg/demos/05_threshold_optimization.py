"""Choosing thresholds from calibrated scores without further oracle calls.

With calibrated scores the expected confusion matrix of any threshold pair is
a closed-form sum, so quality can be traded against delegation by minimizing
``alpha * normalized error + (1 - alpha) * delegation``.
"""
import numpy as np

from streamcascade.core import ThresholdPair
from streamcascade.optimize import expected_confusion, expected_fbeta, optimize_thresholds

g = [0.2, 0.6, 0.9]
c = expected_confusion(g, ThresholdPair(0.5, 0.8))
print(f"scores {g}, thresholds (0.5, 0.8): E[TP]={c.tp:.1f} E[FP]={c.fp:.1f} E[FN]={c.fn:.1f} "
      f"E[F1]={expected_fbeta(c):.4f}\n")

scores = np.random.default_rng(0).beta(2, 2, 5000)
print("alpha  low    high   delegated  E[F1]")
for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
    pair = optimize_thresholds(scores, alpha)
    delegated = np.mean((scores >= pair.low) & (scores < pair.high))
    f = expected_fbeta(expected_confusion(scores, pair))
    print(f"{alpha:.1f}    {pair.low:.3f}  {pair.high:.3f}  {delegated:9.3f}  {f:.3f}")
