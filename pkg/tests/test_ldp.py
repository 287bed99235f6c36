import math

import numpy as np
import pytest

from privsketch.ldp import (
    PrivacyParams,
    calibration_factor,
    flip_probability,
    olh_bucket_count,
    olh_estimate,
    olh_hash,
    olh_keep_probability,
    olh_perturb,
    olh_perturb_batch,
    rr_perturb,
    rr_perturb_bit,
)

# 30-digit mpmath evaluations of 1/(e^x + 1)
Q_EPS3 = 0.0474258731775667808788481517718
Q_EPS3_OVER_512 = 0.498535160440937197329241048783


def test_flip_probability_values():
    assert flip_probability(3.0) == pytest.approx(Q_EPS3, rel=1e-12)
    assert flip_probability(3.0 / 512) == pytest.approx(Q_EPS3_OVER_512, rel=1e-12)


def test_flip_probability_limits_and_monotone():
    eps = [1e-6, 0.01, 0.5, 1, 3, 10, 50, 800]
    qs = [flip_probability(e) for e in eps]
    assert all(a > b for a, b in zip(qs, qs[1:]))
    assert 0.5 - qs[0] < 1e-6
    assert qs[-1] == 0.0
    assert all(0 <= q < 0.5 for q in qs)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_flip_probability_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        flip_probability(bad)


def test_privacy_params_budget_split():
    params = PrivacyParams(3.0, 4, 128)
    assert params.counter_epsilon(sampled=True) == 3.0
    assert params.counter_epsilon(sampled=False) == pytest.approx(3.0 / 512)
    with pytest.raises(ValueError):
        PrivacyParams(0.0, 4, 128)


@pytest.mark.parametrize("eps", [0.1, 1.0, 3.0, 8.0])
def test_rr_likelihood_ratio_is_exactly_e_eps(eps):
    q = flip_probability(eps)
    p = 1 - q
    # Pr[y | b] for y in {-1, +1}, b in {0, 1}
    table = {(b, y): (p if y == 2 * b - 1 else q) for b in (0, 1) for y in (-1, 1)}
    ratio = max(table[(b, y)] / table[(b2, y)] for b in (0, 1) for b2 in (0, 1) for y in (-1, 1))
    assert ratio == pytest.approx(math.exp(eps), rel=1e-12)
    assert calibration_factor(eps) == pytest.approx(1 / (p - q), rel=1e-12)


def test_rr_noiseless(rng):
    assert rr_perturb_bit(1, 0.0, rng) == 1
    assert rr_perturb_bit(0, 0.0, rng) == -1


def test_rr_mean_matches_expectation(rng):
    trials = 100_000
    q = 0.25
    reports = [rr_perturb_bit(1, q, rng) for _ in range(trials)]
    sigma = math.sqrt((1 - (1 - 2 * q) ** 2) / trials)
    assert abs(np.mean(reports) - 0.5) <= 3 * sigma


def test_rr_vector_mean(rng):
    q = flip_probability(1.0)
    bits = np.zeros(200_000, np.uint8)
    out = rr_perturb(bits, q, rng)
    assert set(np.unique(out)) <= {-1, 1}
    sigma = math.sqrt(4 * q * (1 - q) / bits.size)
    assert abs(out.mean() - (1 - 2 * q) * -1) <= 3 * sigma


def test_olh_parameters():
    assert olh_bucket_count(math.log(3)) == 4
    assert olh_keep_probability(math.log(3), 4) == pytest.approx(0.5)
    assert olh_bucket_count(3.0) == 21
    assert olh_bucket_count(1e-3) == 2


def test_olh_noiseless_reports_true_bucket(rng):
    for seed in range(50):
        s, bucket = olh_perturb(123, 3.0, seed, rng, keep_prob=1.0)
        assert s == seed
        assert bucket == olh_hash([seed], 123, 21)[0]


def test_olh_keep_rate(rng):
    trials = 100_000
    eps = 3.0
    g = olh_bucket_count(eps)
    seeds = rng.integers(0, 2**63, size=trials).astype(np.uint64)
    items = np.full(trials, 5)
    buckets = olh_perturb_batch(items, eps, seeds, rng)
    kept = np.mean(buckets == olh_hash(seeds, 5, g))
    p = math.exp(eps) / (math.exp(eps) + g - 1)
    assert abs(kept - p) <= 3 * math.sqrt(p * (1 - p) / trials)
    assert buckets.min() >= 0 and buckets.max() < g


def test_olh_scalar_keep_rate(rng):
    trials = 20_000
    eps = 1.0
    g = olh_bucket_count(eps)
    kept = 0
    for i in range(trials):
        seed, bucket = olh_perturb(9, eps, i, rng)
        kept += bucket == olh_hash([seed], 9, g)[0]
    p = olh_keep_probability(eps, g)
    assert abs(kept / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def _olh_variance(n, holders, eps):
    g = olh_bucket_count(eps)
    p = olh_keep_probability(eps, g)
    q = 1 / g
    return (holders * p * (1 - p) + (n - holders) * q * (1 - q)) / (p - q) ** 2


def test_olh_estimate_all_hold_noiseless():
    reports = [(s, int(olh_hash([s], 4, 21)[0])) for s in range(1000)]
    assert olh_estimate(reports, 4, 3.0, keep_prob=1.0) == pytest.approx(1000)


@pytest.mark.parametrize("holders", [0, 50_000])
def test_olh_estimate_unbiased(rng, holders):
    n, eps = 100_000, 3.0
    items = np.where(np.arange(n) < holders, 7, 8 + np.arange(n))
    seeds = rng.integers(0, 2**63, size=n).astype(np.uint64)
    buckets = olh_perturb_batch(items, eps, seeds, rng)
    est = olh_estimate(list(zip(seeds.tolist(), buckets.tolist())), 7, eps, n)
    assert abs(est - holders) <= 3 * math.sqrt(_olh_variance(n, holders, eps))
