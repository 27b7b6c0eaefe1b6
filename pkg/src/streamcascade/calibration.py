"""Spline logistic calibration with pointwise uncertainty.

Scores are mapped to log-odds, clipped, and expanded in a cubic B-spline
basis.  Coefficients are fit by ridge-penalized logistic regression pulled
toward an increasing prior (roughly the identity map in log-odds), and the
Laplace approximation at the optimum supplies a posterior covariance.  A
bootstrap ensemble gives a distribution-free alternative for the spread.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import BSpline
from scipy.special import expit, logit
from scipy.stats import norm

Q_EPS = 1e-9


class CalibrationFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class SplineBasis:
    """Cubic B-splines on uniformly spaced knots in clipped log-odds space.

    ``n_knots`` counts knot points across ``[logit_min, logit_max]``
    (boundaries included); the knot vector is extended ``degree`` steps past
    each end so the basis is a partition of unity over the whole range.
    """

    n_knots: int = 11
    degree: int = 3
    logit_min: float = -6.0
    logit_max: float = 6.0

    def __post_init__(self):
        if self.n_knots < 2:
            raise ValueError("need at least two knots")
        if self.degree < 0:
            raise ValueError("degree must be non-negative")
        if not self.logit_min < self.logit_max:
            raise ValueError("logit_min must be below logit_max")

    @property
    def knots(self) -> np.ndarray:
        inner = np.linspace(self.logit_min, self.logit_max, self.n_knots)
        h = inner[1] - inner[0]
        pad = h * np.arange(1, self.degree + 1)
        return np.r_[self.logit_min - pad[::-1], inner, self.logit_max + pad]

    @property
    def dimension(self) -> int:
        return self.n_knots + self.degree - 1

    def to_logit(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        with np.errstate(divide="ignore"):
            ell = logit(scores)
        return np.clip(ell, self.logit_min, self.logit_max)


def design_matrix(basis: SplineBasis, scores) -> np.ndarray:
    """Basis functions at ``clip(logit(score))``, one row per score."""
    ell = np.atleast_1d(basis.to_logit(scores))
    return BSpline.design_matrix(ell, basis.knots, basis.degree).toarray()


def platt_prior(basis: SplineBasis) -> np.ndarray:
    """Linearly increasing prior coefficients ``l_min + (l_max - l_min) * j / d``."""
    d = basis.dimension
    j = np.arange(1, d + 1)
    return basis.logit_min + (basis.logit_max - basis.logit_min) * j / d


@dataclass(frozen=True)
class CalibrationModel:
    basis: Optional[SplineBasis]
    coefficients: np.ndarray
    covariance: np.ndarray
    lam: float
    prior_mean: np.ndarray
    n_obs: int = 0
    iterations: int = 0

    def features(self, scores) -> np.ndarray:
        if self.basis is None:
            return platt_features(scores)
        return design_matrix(self.basis, scores)

    def predict_mean_se(self, scores):
        """Posterior mean log-odds and its standard error at each score."""
        phi = self.features(scores)
        f_hat = phi @ self.coefficients
        se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", phi, self.covariance, phi), 0.0, None))
        if np.ndim(scores) == 0:
            return float(f_hat[0]), float(se[0])
        return f_hat, se

    def predict_proba(self, scores):
        f_hat, _ = self.predict_mean_se(scores)
        return expit(f_hat)

    def stochastic_score(self, scores, q):
        """``sigmoid(f_hat(s) + Phi^-1(q) * se(s))`` with ``q`` clamped away from 0 and 1."""
        f_hat, se = self.predict_mean_se(scores)
        z = norm.ppf(np.clip(q, Q_EPS, 1.0 - Q_EPS))
        return expit(f_hat + z * se)


def predict_mean_se(model: CalibrationModel, score):
    return model.predict_mean_se(score)


def stochastic_score(model: CalibrationModel, score, q):
    return model.stochastic_score(score, q)


def penalized_nll(theta, X, y, lam, prior) -> float:
    eta = X @ theta
    diff = theta - prior
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * lam * diff @ diff)


def penalized_grad(theta, X, y, lam, prior) -> np.ndarray:
    return X.T @ (expit(X @ theta) - y) + lam * (theta - prior)


def fit_penalized_logistic(
    X,
    y,
    lam: float,
    prior,
    *,
    basis: Optional[SplineBasis] = None,
    tol: float = 1e-10,
    accept_tol: float = 1e-6,
    max_iter: int = 200,
) -> CalibrationModel:
    """Minimize ridge-penalized logistic loss by damped Newton steps.

    The loss is ``-sum[y log h + (1-y) log(1-h)] + lam/2 ||theta - prior||^2``
    with ``h = sigmoid(X theta)``.  Stops when the gradient norm falls below
    ``tol * max(1, |grad at prior|)`` (plus a roundoff floor proportional to
    ``lam``), or when a full Newton step no longer
    lowers the loss (floating-point floor).  Fails unless the gradient is below
    ``accept_tol`` on the same scale.  The returned covariance is the inverse
    penalized Hessian at the optimum.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    prior = np.asarray(prior, dtype=float)
    if lam <= 0:
        raise ValueError("lam must be positive")
    if X.shape[0] != y.size or X.shape[1] != prior.size:
        raise ValueError("inconsistent shapes for X, y and prior")
    d = prior.size
    theta = prior.copy()
    g = penalized_grad(theta, X, y, lam, prior)
    scale = max(1.0, float(np.linalg.norm(g)))
    # lam * (theta - prior) cannot be resolved below lam * ulp(theta)
    floor = 64 * np.finfo(float).eps * lam * (1.0 + float(np.linalg.norm(prior)))
    obj = penalized_nll(theta, X, y, lam, prior)
    eye = np.eye(d)
    it = 0
    while it < max_iter and np.linalg.norm(g) >= tol * scale + floor:
        it += 1
        h = expit(X @ theta)
        H = (X * (h * (1 - h))[:, None]).T @ X + lam * eye
        step = np.linalg.solve(H, g)
        t = 1.0
        while True:
            cand = theta - t * step
            cand_obj = penalized_nll(cand, X, y, lam, prior)
            if cand_obj <= obj - 1e-4 * t * (g @ step) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10 and cand_obj >= obj:
            break
        theta, obj = cand, cand_obj
        g = penalized_grad(theta, X, y, lam, prior)
    if np.linalg.norm(g) >= accept_tol * scale + floor:
        raise CalibrationFitError(
            f"no convergence after {it} Newton steps: |grad| = "
            f"{np.linalg.norm(g):.3e} (target {accept_tol * scale + floor:.3e}), lam = {lam}, n = {y.size}"
        )
    h = expit(X @ theta)
    H = (X * (h * (1 - h))[:, None]).T @ X + lam * eye
    cov = np.linalg.inv(H)
    cov = 0.5 * (cov + cov.T)
    return CalibrationModel(basis, theta, cov, lam, prior, n_obs=int(y.size), iterations=it)


def fit_calibration(scores, labels, lam: float = 0.6, basis: Optional[SplineBasis] = None) -> CalibrationModel:
    """Spline calibration of proxy scores against oracle labels."""
    basis = basis or SplineBasis()
    X = design_matrix(basis, scores)
    return fit_penalized_logistic(X, labels, lam, platt_prior(basis), basis=basis)


def platt_features(scores) -> np.ndarray:
    scores = np.atleast_1d(np.asarray(scores, dtype=float))
    return np.column_stack([np.ones_like(scores), scores])


def fit_platt(scores, labels, lam: float = 1e-6) -> CalibrationModel:
    """Two-parameter logistic ``sigmoid(a + b * s)`` on raw scores (reference fit)."""
    return fit_penalized_logistic(platt_features(scores), labels, lam, np.zeros(2))


@dataclass(frozen=True)
class BootstrapEnsemble:
    primary: CalibrationModel
    members: Sequence[CalibrationModel] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.members) < 1:
            raise ValueError("a bootstrap ensemble needs at least one member")

    def deviations(self, scores) -> np.ndarray:
        """Member log-odds minus their mean; shape ``(B, n)``."""
        logits = np.array([np.atleast_1d(m.predict_mean_se(scores)[0]) for m in self.members])
        return logits - logits.mean(axis=0)

    def stochastic_score(self, scores, q):
        base = np.atleast_1d(self.primary.predict_mean_se(scores)[0])
        dev = self.deviations(scores)
        q = np.broadcast_to(np.clip(q, 0.0, 1.0), base.shape)
        shift = np.array([np.quantile(dev[:, i], q[i]) for i in range(base.size)])
        out = expit(base + shift)
        return float(out[0]) if np.ndim(scores) == 0 else out


def fit_bootstrap(
    scores,
    labels,
    B: int = 100,
    lam: float = 0.6,
    basis: Optional[SplineBasis] = None,
    rng: Optional[np.random.Generator] = None,
) -> BootstrapEnsemble:
    """Primary fit on all data plus ``B`` fits on with-replacement resamples."""
    if B < 1:
        raise ValueError("B must be >= 1")
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.size < 1:
        raise ValueError("need at least one observation")
    rng = rng if rng is not None else np.random.default_rng()
    basis = basis or SplineBasis()
    primary = fit_calibration(scores, labels, lam, basis)
    members = []
    for _ in range(B):
        idx = rng.integers(0, scores.size, size=scores.size)
        members.append(fit_calibration(scores[idx], labels[idx], lam, basis))
    return BootstrapEnsemble(primary, tuple(members))


def bootstrap_stochastic_score(ensemble: BootstrapEnsemble, score, q):
    return ensemble.stochastic_score(score, q)
