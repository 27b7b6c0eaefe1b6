"""End-to-end acceptance checks, one test per numbered criterion.

Each test prints an ``ACCEPTANCE n: PASS|FAIL`` line (also collected into the
pytest terminal summary) before asserting.  Run just this suite with::

    pytest tests/test_acceptance.py -v
"""
import math
import time

import numpy as np
import pytest
from scipy.special import expit, logit

from streamcascade.calibration import design_matrix, fit_calibration, penalized_grad, penalized_nll, platt_prior
from streamcascade.cli import calibration_curve, parse_config
from streamcascade.core import QualityTargets
from streamcascade.engine import (
    RunConfig,
    SyntheticSpec,
    best_operating_points,
    generate,
    report_to_csv_text,
    run_parallel,
    sweep,
)
from streamcascade.optimize import CascadeObjective, expected_confusion, optimize_thresholds, reparameterize
from streamcascade.core import ThresholdPair
from streamcascade.sampling import ht_correction, mixing_weights, weighted_sample_without_replacement
from streamcascade.supg import AccumulatedSample, corrected_recall_target, recall_threshold, weighted_tpr

pytestmark = pytest.mark.acceptance


def bimodal(n, overlap, seed=0):
    return generate(SyntheticSpec(n=n, overlap=overlap, seed=seed))


def per_record_expectation(g, low, high):
    """Each record contributes its own two outcomes (y=1 w.p. g, y=0 otherwise)."""
    tp, fp, fn = [], [], []
    for gi in g:
        for y, p in ((1, gi), (0, 1.0 - gi)):
            if gi >= low and y == 1:
                tp.append(p)
            if gi >= high and y == 0:
                fp.append(p)
            if gi < low and y == 1:
                fn.append(p)
    return math.fsum(tp), math.fsum(fp), math.fsum(fn)


def test_01_expected_confusion_matches_per_record_oracle(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 501))
        g = rng.beta(0.7, 0.7, n)
        low, high = np.sort(rng.random(2))
        c = expected_confusion(g, ThresholdPair(low, high))
        ref = per_record_expectation(g, low, high)
        worst = max(worst, max(abs(a - b) for a, b in zip((c.tp, c.fp, c.fn), ref)))
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-12 and elapsed < 5, f"max |error| {worst:.2e} over 100 instances, {elapsed:.2f}s")


def test_02_de_matches_exhaustive_grid(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    gaps = []
    for k in range(20):
        g = rng.beta(rng.uniform(0.3, 3), rng.uniform(0.3, 3), 200)
        alpha = float(rng.uniform(0.05, 0.95))
        obj = CascadeObjective(g, alpha)
        cand = np.r_[0.0, np.sort(g), 1.0]
        lo, hi = np.meshgrid(cand, cand, indexing="ij")
        ok = lo <= hi
        grid_best = obj(lo[ok], hi[ok]).min()
        pair = optimize_thresholds(g, alpha)
        gaps.append(obj(pair.low, pair.high)[0] - grid_best)
    elapsed = time.perf_counter() - start
    worst = max(gaps)
    verdict(2, worst <= 1e-9 and elapsed < 60, f"worst DE - grid gap {worst:.2e} over 20 instances, {elapsed:.1f}s")


def test_03_reparameterization(verdict):
    rng = np.random.default_rng(303)
    y1, y2 = rng.random(100_000), rng.random(100_000)
    low, high = reparameterize(y1, y2)
    ordered = bool(np.all((0 <= low) & (low <= high) & (high <= 1)))
    scalar_ok = all(
        0 <= p.low <= p.high <= 1 for p in (reparameterize(float(a), float(b)) for a, b in zip(y1[:2000], y2[:2000]))
    )
    ys = rng.random(1000)
    collapse = all(reparameterize(float(a), 0.0).width == 0 for a in ys)
    top = all(reparameterize(float(a), 1.0).high == 1.0 for a in ys)
    verdict(3, ordered and scalar_ok and collapse and top,
            f"ordered={ordered and scalar_ok}, y2=0 collapses={collapse}, y2=1 gives high=1: {top}")


def test_04_horvitz_thompson_single_draw_is_unbiased(verdict):
    rng = np.random.default_rng(404)
    data = bimodal(400, 0.4, seed=4)
    x = data.labels.astype(float)
    truth = x.mean()
    errors = {}
    for eta in (0.0, 0.5, 0.9):
        w = mixing_weights(data.scores, eta)
        c = ht_correction(w, x.size)
        picks = np.array([weighted_sample_without_replacement(w, 1, rng)[0] for _ in range(100_000)])
        errors[eta] = abs(np.mean(c[picks] * x[picks]) - truth) / truth
    ok = all(e < 0.02 for e in errors.values())
    verdict(4, ok, "relative errors " + ", ".join(f"eta={k}: {v:.4f}" for k, v in errors.items()))


def test_05_tpr_monotone_and_target_clipped(verdict):
    rng = np.random.default_rng(505)
    taus = np.linspace(0, 1, 41)
    monotone = clipped = 0
    for _ in range(1000):
        n = int(rng.integers(5, 300))
        s = rng.random(n)
        y = (rng.random(n) < s).astype(int)
        if not y.any():
            y[int(np.argmax(s))] = 1
        w = mixing_weights(s, float(rng.random()))
        sample = AccumulatedSample.from_arrays(s, y, ht_correction(w, n))
        tpr = [weighted_tpr(sample, t) for t in taus]
        monotone += all(b <= a for a, b in zip(tpr, tpr[1:]))
        t_r, clip = float(rng.uniform(0.5, 0.95)), float(rng.uniform(0, 0.1))
        targets = QualityTargets(0.8, t_r, float(rng.uniform(0.01, 0.5)))
        out = corrected_recall_target(sample, recall_threshold(sample, t_r), targets, clip)
        clipped += t_r <= out <= t_r + clip
    verdict(5, monotone == 1000 and clipped == 1000, f"monotone {monotone}/1000, clipped {clipped}/1000")


def test_06_calibration_fit_optimality(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    s = rng.random(3000)
    y = (rng.random(3000) < expit(1.8 * logit(s) + 0.3)).astype(float)
    model = fit_calibration(s, y, 0.6)
    elapsed = time.perf_counter() - start
    X = design_matrix(model.basis, s)
    prior = platt_prior(model.basis)
    grad = np.linalg.norm(penalized_grad(model.coefficients, X, y, 0.6, prior))
    theta = model.coefficients + rng.normal(0, 0.3, prior.size)
    g = penalized_grad(theta, X, y, 0.6, prior)
    fd = np.empty_like(g)
    h = 1e-5
    for j in range(g.size):
        e = np.zeros_like(theta)
        e[j] = h
        fd[j] = (penalized_nll(theta + e, X, y, 0.6, prior) - penalized_nll(theta - e, X, y, 0.6, prior)) / (2 * h)
    rel = np.linalg.norm(fd - g) / np.linalg.norm(g)
    min_eig = np.linalg.eigvalsh(model.covariance).min()
    ok = grad < 1e-6 and rel < 1e-4 and min_eig >= 0 and elapsed < 10 and prior.size == 13
    verdict(6, ok, f"|grad| {grad:.2e}, FD rel err {rel:.2e}, min eig {min_eig:.2e}, d={prior.size}, fit {elapsed:.2f}s")


def test_07_calibration_beats_platt_beats_raw(verdict):
    start = time.perf_counter()
    _, _, ece = calibration_curve(parse_config())
    elapsed = time.perf_counter() - start
    ok = (ece["raw"] >= 0.10 and ece["calibrated"] < ece["platt"] < ece["raw"]
          and ece["calibrated"] < 0.03 and elapsed < 30)
    verdict(7, ok, f"held-out ECE raw {ece['raw']:.4f}, Platt {ece['platt']:.4f}, "
                   f"calibrated {ece['calibrated']:.4f}, {elapsed:.1f}s")


def _slope(v):
    x = np.arange(len(v), dtype=float)
    return float(np.polyfit(x, v, 1)[0]) if len(v) > 1 else 0.0


def test_08_gamcal_delegation_trajectory(verdict):
    start = time.perf_counter()
    failures = []
    finals = []
    for seed in range(10):
        cfg = RunConfig(algorithm="gamcal", batch_size=200, rho=0.03, alpha=0.35, seed=seed)
        report = run_parallel(cfg, bimodal(10_000, 0.2, seed=seed))
        traj = report.threshold_trajectory
        events = [e[0] for e in report.retrain_events[0]]
        uncertain = np.array([p.uncertain_fraction for p in traj])
        budget = math.floor(cfg.rho * cfg.batch_size)
        cold_ok = bool(events) and np.all(uncertain[: events[0]] == 1.0) and all(
            p.oracle_calls <= budget for p in traj)
        bounds = events + [len(traj)]
        segments = [uncertain[a:b].mean() for a, b in zip(bounds, bounds[1:]) if b > a]
        trend_ok = all(v < 1.0 for v in segments) and _slope(segments) <= 0
        final = uncertain[-10:].mean()
        finals.append(final)
        changes = {t for t in range(1, len(traj)) if traj[t].thresholds != traj[t - 1].thresholds}
        piecewise_ok = changes <= set(events)
        if not (cold_ok and trend_ok and final <= 0.25 and piecewise_ok):
            failures.append(seed)
    elapsed = time.perf_counter() - start
    verdict(8, not failures and elapsed < 120,
            f"failing seeds {failures}; final delegation {min(finals):.3f}-{max(finals):.3f}; {elapsed:.1f}s")


def test_09_supg_it_width_non_increasing(verdict):
    start = time.perf_counter()
    monotone, f1s = 0, []
    for seed in range(10):
        cfg = RunConfig(algorithm="supg_it", batch_size=200, rho=0.1, t_p=0.8, t_r=0.8, seed=seed)
        report = run_parallel(cfg, bimodal(5000, 0.3, seed=seed))
        widths = [p.thresholds.width for p in report.threshold_trajectory]
        monotone += all(b <= a for a, b in zip(widths, widths[1:]))
        f1s.append(report.metrics.f_beta)
    elapsed = time.perf_counter() - start
    ok = monotone >= 8 and min(f1s) >= 0.9 and elapsed < 120
    verdict(9, ok, f"width non-increasing in {monotone}/10 seeds, min F1 {min(f1s):.3f}, {elapsed:.1f}s")


def test_10_joint_target_reliability(verdict):
    start = time.perf_counter()
    data = bimodal(10_000, 0.4)
    satisfied = 0
    for seed in range(100):
        cfg = RunConfig(algorithm="supg_it", t_p=0.8, t_r=0.8, delta=0.2, rho=0.1, seed=seed)
        m = run_parallel(cfg, data).metrics
        satisfied += m.precision >= 0.8 and m.recall >= 0.8
    elapsed = time.perf_counter() - start
    verdict(10, satisfied >= 90 and elapsed < 600, f"joint satisfaction {satisfied}/100, {elapsed:.1f}s")


def test_11_baseline_ordering(verdict):
    data = bimodal(10_000, 0.4)
    grid = {"target": [0.6, 0.7, 0.8, 0.9, 0.95]}
    best, base_delegation = {}, []
    for alg in ("supg_base", "supg_sp", "supg_it"):
        rows = sweep(RunConfig(algorithm=alg, residual="fallback_threshold"), grid, 10, data)
        best[alg] = best_operating_points(rows)[alg][0]
        if alg == "supg_base":
            base_delegation = [r.report.metrics.delegation_rate for r in rows]
    granularity = 512 / len(data)
    rho_ok = all(abs(d - 0.1) <= granularity for d in base_delegation)
    ok = best["supg_base"] < best["supg_sp"] <= best["supg_it"] and rho_ok
    verdict(11, ok, "mean best F1 " + ", ".join(f"{k} {v:.4f}" for k, v in best.items())
            + f"; Base delegation {min(base_delegation):.4f}-{max(base_delegation):.4f}")


def test_12_parallelism_robustness(verdict):
    start = time.perf_counter()
    data = bimodal(20_000, 0.4)
    spreads = {}
    for alg in ("gamcal", "supg_it"):
        worst = 0.0
        for seed in range(10):
            f1 = [run_parallel(RunConfig(algorithm=alg, workers=w, seed=seed, residual="fallback_threshold"),
                               data).metrics.f_beta for w in (1, 4, 8)]
            worst = max(worst, max(f1) - min(f1))
        spreads[alg] = worst
    elapsed = time.perf_counter() - start
    ok = all(v < 0.02 for v in spreads.values()) and elapsed < 600
    verdict(12, ok, "max F1 spread over W in {1,4,8}: "
            + ", ".join(f"{k} {v:.4f}" for k, v in spreads.items()) + f"; {elapsed:.1f}s")


def test_13_determinism(verdict):
    data = bimodal(4000, 0.4)
    texts = []
    for _ in range(2):
        rows = []
        for alg, grid in (("gamcal", {"alpha": [0.3, 0.6]}), ("supg_it", {"target": [0.7, 0.9]}),
                          ("supg_sp", {"target": [0.8]}), ("supg_base", {"target": [0.8]})):
            rows += sweep(RunConfig(algorithm=alg, workers=4), grid, [0, 1], data, run_prefix=alg)
        texts.append(report_to_csv_text(rows).encode())
    verdict(13, texts[0] == texts[1], f"two {len(texts[0])}-byte report CSVs identical: {texts[0] == texts[1]}")
