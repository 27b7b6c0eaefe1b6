import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamcascade.sampling import draw, ht_correction, mixing_weights, weighted_sample_without_replacement


def test_mixing_weights_examples():
    np.testing.assert_allclose(mixing_weights([0.1, 0.7, 0.3], 0.0), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(mixing_weights([0.25, 1.0], 1.0), [1 / 3, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(mixing_weights([0.25, 1.0], 0.5), [5 / 12, 7 / 12], atol=1e-15)


def test_mixing_weights_all_zero_scores_are_uniform():
    np.testing.assert_allclose(mixing_weights([0.0, 0.0, 0.0, 0.0], 0.9), [0.25] * 4)


def test_mixing_weights_errors():
    with pytest.raises(ValueError):
        mixing_weights([], 0.5)
    with pytest.raises(ValueError):
        mixing_weights([0.5], 1.5)
    with pytest.raises(ValueError):
        mixing_weights([1.5], 0.5)


@settings(max_examples=200)
@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=60), st.floats(0, 1))
def test_mixing_weights_sum_to_one_with_floor(scores, eta):
    w = mixing_weights(scores, eta)
    m = len(scores)
    assert abs(w.sum() - 1.0) < 1e-9
    assert np.all(w >= (1 - eta) / m - 1e-15)


@pytest.mark.parametrize("w, m, expected", [(0.2, 5, 1.0), (0.5, 4, 0.5), (0.1, 5, 2.0)])
def test_ht_correction_examples(w, m, expected):
    assert ht_correction(w, m) == pytest.approx(expected, rel=1e-15)


def test_ht_correction_errors():
    with pytest.raises(ValueError):
        ht_correction(0.0, 3)
    with pytest.raises(ValueError):
        ht_correction(0.5, 0)


def test_sample_full_permutation_and_errors():
    rng = np.random.default_rng(0)
    idx = weighted_sample_without_replacement(np.full(7, 1 / 7), 7, rng)
    assert sorted(idx.tolist()) == list(range(7))
    with pytest.raises(ValueError):
        weighted_sample_without_replacement([0.5, 0.5], 3, rng)
    assert weighted_sample_without_replacement([0.5, 0.5], 0, rng).size == 0


def test_sample_degenerate_mass():
    rng = np.random.default_rng(1)
    hits = [weighted_sample_without_replacement([1 - 2e-12, 1e-12, 1e-12], 1, rng)[0] for _ in range(2000)]
    assert np.mean(np.array(hits) == 0) > 0.999


def test_single_draw_frequencies_match_weights():
    rng = np.random.default_rng(2)
    w = np.array([0.5, 0.3, 0.2])
    keys = rng.exponential(size=(100_000, 3)) / w
    freq = np.bincount(np.argmin(keys, axis=1), minlength=3) / 100_000
    np.testing.assert_allclose(freq, w, atol=0.01)
    # and through the public function
    rng = np.random.default_rng(3)
    first = [weighted_sample_without_replacement(w, 1, rng)[0] for _ in range(20_000)]
    np.testing.assert_allclose(np.bincount(first, minlength=3) / 20_000, w, atol=0.015)


def test_second_draw_follows_renormalized_weights():
    # P(second = 2 | first = 0) = 0.2 / 0.5 under draw-and-renormalize
    rng = np.random.default_rng(4)
    w = np.array([0.5, 0.3, 0.2])
    pairs = np.array([weighted_sample_without_replacement(w, 2, rng) for _ in range(40_000)])
    given_first0 = pairs[pairs[:, 0] == 0, 1]
    assert np.mean(given_first0 == 2) == pytest.approx(0.4, abs=0.015)


@settings(max_examples=100)
@given(st.integers(1, 40), st.data())
def test_sample_distinct_and_deterministic(m, data):
    k = data.draw(st.integers(0, m))
    w = mixing_weights(np.linspace(0, 1, m), 0.5)
    a = weighted_sample_without_replacement(w, k, np.random.default_rng(9))
    b = weighted_sample_without_replacement(w, k, np.random.default_rng(9))
    assert len(set(a.tolist())) == k
    np.testing.assert_array_equal(a, b)


def test_draw_bundles_weights_and_corrections():
    rng = np.random.default_rng(5)
    scores = np.array([0.1, 0.4, 0.9, 0.0])
    w = mixing_weights(scores, 0.5)
    out = draw(scores, 3, 0.5, rng)
    assert len(out) == 3
    for d in out:
        assert d.weight == w[d.index]
        assert d.correction == pytest.approx((1 / 4) / w[d.index], rel=1e-15)
