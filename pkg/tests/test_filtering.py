"""Weighted moments and the down-weighting filter."""

import numpy as np
import pytest

from robust_sparse import (DegenerateWeightsError, WeightVector,
                           downweight_filter, weighted_moments)

RNG = np.random.default_rng(7)


def test_moments_uniform_weights_match_numpy():
    x = RNG.standard_normal((500, 6))
    mom = weighted_moments(x, np.ones(500))
    assert np.allclose(mom.mu, x.mean(axis=0), atol=1e-12)
    assert np.allclose(mom.sigma, np.cov(x.T, bias=True), atol=1e-10)
    assert mom.mass == 1.0


def test_moments_single_point_indicator():
    x = RNG.standard_normal((50, 4))
    w = np.zeros(50)
    w[17] = 1.0
    mom = weighted_moments(x, w)
    assert np.allclose(mom.mu, x[17], atol=1e-12)
    assert np.allclose(mom.sigma, 0.0, atol=1e-12)


def test_moments_match_scalar_loop_reference():
    x = RNG.standard_normal((5, 3))
    w = RNG.random(5)
    mom = weighted_moments(x, w)
    # independent naive implementation
    ws = w.sum()
    mu = sum(w[i] * x[i] for i in range(5)) / ws
    sig = sum(w[i] * np.outer(x[i] - mu, x[i] - mu) for i in range(5)) / ws
    assert np.allclose(mom.mu, mu, atol=1e-12)
    assert np.allclose(mom.sigma, sig, atol=1e-12)


def test_moments_psd_and_recomputable():
    x = RNG.standard_normal((300, 8)) * 3 + 1.5
    w = RNG.random(300)
    mom = weighted_moments(x, w)
    assert np.linalg.eigvalsh(mom.sigma).min() > -1e-8
    mom2 = weighted_moments(x, w)
    assert np.allclose(mom.sigma, mom2.sigma, atol=1e-9)


def test_moments_rejects_zero_weights():
    with pytest.raises(DegenerateWeightsError):
        weighted_moments(RNG.standard_normal((10, 2)), np.zeros(10))


def test_weight_vector_validation():
    with pytest.raises(ValueError):
        WeightVector(np.array([0.5, 1.2]))
    wv = WeightVector(np.array([0.5, 1.0, 0.0]))
    assert wv.total_mass == pytest.approx(0.5)


def test_filter_zero_scores_noop():
    w = WeightVector(np.full(20, 0.7))
    out = downweight_filter(w, np.zeros(20), s=0.1, beta=2.0)
    assert np.array_equal(out.w, w.w)
    assert out.passes == 0


def test_filter_idempotent_at_rest():
    # mean weighted score already below s*beta -> untouched
    w = np.full(100, 0.9)
    scores = np.full(100, 0.01)
    out = downweight_filter(w, scores, s=0.05, beta=3.0)
    assert np.array_equal(out.w, w)


def test_filter_single_huge_score():
    n = 1000
    scores = np.zeros(n)
    scores[0] = 1e6
    w = np.ones(n)
    out = downweight_filter(w, scores, s=0.05, beta=3.0)
    assert np.array_equal(out.w[1:], w[1:])          # others untouched
    assert out.w[0] == 0.0                           # offender zeroed
    assert np.mean(out.w * scores) <= 0.05 * 3.0
    assert out.passes <= int(np.ceil(1e6 / (np.e * 0.05)))


def test_filter_monotone_and_pass_cap():
    n = 500
    w = RNG.uniform(0.2, 1.0, n)
    scores = RNG.uniform(0, 50, n)
    out = downweight_filter(w, scores, s=0.2, beta=2.0)
    assert np.all(out.w <= w + 1e-15)
    assert out.passes <= int(np.ceil(scores.max() / (np.e * 0.2)))


def test_filter_mass_accounting_on_labeled_mixture():
    # Lemma-style accounting: when inlier weighted scores are below s, the
    # filter removes (beta-1)/eps times more outlier mass than inlier mass.
    n = 4000
    labels = RNG.random(n) < 0.1
    eps_hat = labels.mean()
    w = WeightVector(RNG.uniform(0.5, 1.0, n))
    scores = RNG.uniform(0.0, 1.0, n)
    scores[labels] = RNG.uniform(200.0, 500.0, labels.sum())
    s, beta = 1.0, 4.0
    assert (1 - eps_hat) * np.mean(w.w[~labels] * scores[~labels]) < s
    out = downweight_filter(w, scores, s=s, beta=beta)
    removed = w.w - out.w
    lhs = (1 - eps_hat) * removed[~labels].mean()
    rhs = eps_hat / (beta - 1) * removed[labels].mean()
    assert lhs < rhs


def test_filter_rejects_bad_parameters():
    with pytest.raises(ValueError):
        downweight_filter(np.ones(3), np.array([-1.0, 0, 0]), s=0.1, beta=2.0)
    with pytest.raises(ValueError):
        downweight_filter(np.ones(3), np.ones(3), s=0.0, beta=2.0)
    with pytest.raises(ValueError):
        downweight_filter(np.ones(3), np.ones(3), s=0.1, beta=1.0)
