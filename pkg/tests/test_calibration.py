import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from streamcascade.calibration import (
    BootstrapEnsemble,
    CalibrationFitError,
    CalibrationModel,
    SplineBasis,
    bootstrap_stochastic_score,
    design_matrix,
    fit_bootstrap,
    fit_calibration,
    fit_penalized_logistic,
    fit_platt,
    penalized_grad,
    penalized_nll,
    platt_prior,
    predict_mean_se,
    stochastic_score,
)

BASIS = SplineBasis()


def test_default_basis_shape():
    assert BASIS.dimension == 13
    k = BASIS.knots
    assert np.all(np.diff(k) > 0)
    assert design_matrix(BASIS, [0.3]).shape == (1, 13)


def test_platt_prior_examples():
    np.testing.assert_allclose(platt_prior(SplineBasis(n_knots=2, degree=0, logit_min=-4, logit_max=4)), [4.0])
    np.testing.assert_allclose(platt_prior(SplineBasis(n_knots=2, degree=1, logit_min=-4, logit_max=4)), [0.0, 4.0])
    mu = platt_prior(BASIS)
    assert mu[-1] == BASIS.logit_max and np.all(np.diff(mu) > 0)


def test_prior_mean_curve_is_increasing():
    s = np.linspace(0.001, 0.999, 500)
    f = design_matrix(BASIS, s) @ platt_prior(BASIS)
    assert np.all(np.diff(f) > 0)


def test_design_matrix_partition_of_unity_and_local_support():
    s = np.r_[0.0, np.linspace(0, 1, 100), 1.0, 1e-300, 1 - 1e-16]
    X = design_matrix(BASIS, s)
    np.testing.assert_allclose(X.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(X >= 0)
    assert np.all((X > 0).sum(axis=1) <= BASIS.degree + 1)


def test_design_matrix_clips_in_logit_space():
    at_min = design_matrix(BASIS, [0.0])
    np.testing.assert_array_equal(at_min, design_matrix(BASIS, [expit(-6.0)]))
    np.testing.assert_array_equal(design_matrix(BASIS, [1.0]), design_matrix(BASIS, [expit(7.0)]))


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30))
def test_partition_of_unity_property(scores):
    np.testing.assert_allclose(design_matrix(BASIS, scores).sum(axis=1), 1.0, atol=1e-10)


def fd_gradient(theta, X, y, lam, prior, h=1e-5):
    g = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (penalized_nll(theta + e, X, y, lam, prior) - penalized_nll(theta - e, X, y, lam, prior)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    s = rng.random(300)
    y = (rng.random(300) < s).astype(float)
    X = design_matrix(BASIS, s)
    prior = platt_prior(BASIS)
    theta = prior + rng.normal(0, 0.5, prior.size)
    np.testing.assert_allclose(penalized_grad(theta, X, y, 0.6, prior), fd_gradient(theta, X, y, 0.6, prior),
                               rtol=1e-5, atol=1e-6)


def test_fit_is_a_stationary_point_with_psd_covariance():
    rng = np.random.default_rng(1)
    s = rng.random(3000)
    y = (rng.random(3000) < expit(2 * logit(s))).astype(float)
    model = fit_calibration(s, y, 0.6)
    X = design_matrix(BASIS, s)
    prior = platt_prior(BASIS)
    g0 = np.linalg.norm(penalized_grad(prior, X, y, 0.6, prior))
    g = penalized_grad(model.coefficients, X, y, 0.6, prior)
    assert np.linalg.norm(g) < 1e-6 * max(1.0, g0)
    np.testing.assert_allclose(model.covariance, model.covariance.T)
    assert np.linalg.eigvalsh(model.covariance).min() >= -1e-8
    h = expit(X @ model.coefficients)
    H = (X * (h * (1 - h))[:, None]).T @ X + 0.6 * np.eye(13)
    np.testing.assert_allclose(model.covariance @ H, np.eye(13), atol=1e-8)


def test_heavy_penalty_returns_prior():
    rng = np.random.default_rng(2)
    s = rng.random(20)
    y = (rng.random(20) < 0.5).astype(float)
    model = fit_calibration(s, y, lam=1e12)
    np.testing.assert_allclose(model.coefficients, platt_prior(BASIS), atol=1e-9)


def test_fit_accepts_single_class_data():
    model = fit_calibration([0.2, 0.4, 0.9], [1, 1, 1], lam=0.6)
    assert np.all(np.isfinite(model.coefficients))


def test_nonconvergence_raises_with_diagnostics():
    s = np.r_[np.full(50, 0.1), np.full(50, 0.9)]
    y = np.r_[np.zeros(50), np.ones(50)]
    X = np.column_stack([np.ones(100), logit(s)])
    with pytest.raises(CalibrationFitError, match="Newton steps"):
        fit_penalized_logistic(X, y, 1e-9, np.zeros(2), max_iter=2)


def test_fit_recovers_smooth_truth():
    rng = np.random.default_rng(3)
    s = rng.random(3000)
    ell = np.clip(logit(s), -6, 6)
    truth = 1.5 * np.tanh(ell / 1.5) + 0.3
    y = (rng.random(3000) < expit(truth)).astype(float)
    model = fit_calibration(s, y, 0.6)
    lo, hi = np.quantile(s, [0.05, 0.95])
    grid = np.linspace(lo, hi, 200)
    g_ell = logit(grid)
    err = np.abs(model.predict_mean_se(grid)[0] - (1.5 * np.tanh(g_ell / 1.5) + 0.3))
    assert err.max() < 0.5


def test_predict_mean_se_quadratic_form_cases():
    theta = platt_prior(BASIS)
    zero = CalibrationModel(BASIS, theta, np.zeros((13, 13)), 1.0, theta)
    eye = CalibrationModel(BASIS, theta, np.eye(13), 1.0, theta)
    f, se = predict_mean_se(zero, 0.3)
    assert se == 0.0 and f == pytest.approx(float(design_matrix(BASIS, [0.3])[0] @ theta))
    _, se = predict_mean_se(eye, 0.3)
    assert se == pytest.approx(np.linalg.norm(design_matrix(BASIS, [0.3])[0]))


def test_se_smaller_where_data_is_dense():
    rng = np.random.default_rng(4)
    s = rng.uniform(0.4, 0.6, 400)
    y = (rng.random(400) < s).astype(float)
    model = fit_calibration(s, y, 0.6)
    assert model.predict_mean_se(0.5)[1] < model.predict_mean_se(0.95)[1]


def test_stochastic_score_properties():
    rng = np.random.default_rng(5)
    s = rng.random(500)
    y = (rng.random(500) < s).astype(float)
    model = fit_calibration(s, y, 0.6)
    f, _ = model.predict_mean_se(0.3)
    assert stochastic_score(model, 0.3, 0.5) == pytest.approx(expit(f))
    grid = np.linspace(0, 1, 41)
    qs = np.linspace(0, 1, 21)
    vals = np.array([model.stochastic_score(grid, np.full(grid.size, q)) for q in qs])
    assert np.all(np.diff(vals, axis=0) >= 0)
    assert np.all((vals > 0) & (vals < 1))
    flat = CalibrationModel(BASIS, model.coefficients, np.zeros((13, 13)), 0.6, model.prior_mean)
    assert flat.stochastic_score(0.3, 0.01) == flat.stochastic_score(0.3, 0.99)


def test_platt_reference_fit():
    rng = np.random.default_rng(6)
    s = rng.random(4000)
    y = (rng.random(4000) < expit(-1 + 3 * s)).astype(float)
    platt = fit_platt(s, y)
    a, b = platt.coefficients
    assert a == pytest.approx(-1, abs=0.25) and b == pytest.approx(3, abs=0.4)
    assert platt.basis is None


def test_bootstrap_basics_and_determinism():
    rng = np.random.default_rng(7)
    s = rng.random(200)
    y = (rng.random(200) < s).astype(float)
    one = fit_bootstrap(s, y, B=1, rng=np.random.default_rng(0))
    assert len(one.members) == 1
    a = fit_bootstrap(s, y, B=5, rng=np.random.default_rng(1))
    b = fit_bootstrap(s, y, B=5, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(a.stochastic_score(s[:20], np.full(20, 0.3)),
                                  b.stochastic_score(s[:20], np.full(20, 0.3)))
    with pytest.raises(ValueError):
        fit_bootstrap(s, y, B=0)


def test_bootstrap_spread_shrinks_with_n():
    rng = np.random.default_rng(8)

    def spread(n):
        s = rng.random(n)
        y = (rng.random(n) < s).astype(float)
        ens = fit_bootstrap(s, y, B=40, rng=np.random.default_rng(n))
        return ens.deviations(0.5).std()

    assert spread(200) > spread(2000)


def _shifted(model, shift):
    return CalibrationModel(BASIS, model.coefficients + shift, model.covariance, model.lam, model.prior_mean)


def test_bootstrap_quantile_edge_cases():
    rng = np.random.default_rng(9)
    s = rng.random(100)
    y = (rng.random(100) < s).astype(float)
    primary = fit_calibration(s, y)
    f = primary.predict_mean_se(0.4)[0]
    same = BootstrapEnsemble(primary, (primary, primary, primary))
    assert bootstrap_stochastic_score(same, 0.4, 0.8) == pytest.approx(expit(f))
    # partition of unity: shifting every coefficient by a shifts the logit by a
    pair = BootstrapEnsemble(primary, (_shifted(primary, -0.7), _shifted(primary, 0.7)))
    assert bootstrap_stochastic_score(pair, 0.4, 0.5) == pytest.approx(expit(f), abs=1e-12)
    assert bootstrap_stochastic_score(pair, 0.4, 0.0) == pytest.approx(expit(f - 0.7), abs=1e-12)
    assert bootstrap_stochastic_score(pair, 0.4, 1.0) == pytest.approx(expit(f + 0.7), abs=1e-12)
