import math

import numpy as np
import pytest

from privsketch.hashing import make_hash_family
from privsketch.ldp import PrivacyParams, flip_probability
from privsketch.protocol import (
    FullReports,
    SampledReports,
    calibrate_sampled,
    check_decode_first_inequality,
    collector_estimate_full,
    collector_estimate_sampled,
    decode_first_counts,
    simulate_full,
    simulate_sampled,
    user_report_full,
    user_report_sampled,
)
from privsketch.sketch import encode, encode_batch

from conftest import random_users


def exact_sketch_frequency(users, fam, domain):
    """f~(x): share of users whose own sketch has a 1 in every row at x."""
    out = []
    for x in domain:
        hits = 0
        for u in users:
            cells = encode(u.tolist(), fam).cells
            hits += min(int(cells[k, fam.hash(k, int(x))]) for k in range(fam.k_count))
        out.append(hits / len(users))
    return np.array(out)


# -- user side -------------------------------------------------------------


def test_sampled_empty_user_noiseless(rng):
    fam = make_hash_family(4, 16, 1)
    params = PrivacyParams(3.0, 4, 16)
    for _ in range(50):
        assert user_report_sampled([], params, fam, rng, flip_prob=0.0).perturbed_value == -1


def test_sampled_full_sketch_noiseless(rng):
    fam = make_hash_family(2, 2, 1)
    items = list(range(64))  # enough items to set every cell
    assert encode(items, fam).cells.all()
    params = PrivacyParams(3.0, 2, 2)
    for _ in range(50):
        assert user_report_sampled(items, params, fam, rng, flip_prob=0.0).perturbed_value == 1


def test_sampled_report_is_seed_deterministic(family):
    params = PrivacyParams(3.0, 4, 128)
    a = user_report_sampled([1, 2, 3], params, family, np.random.default_rng(5))
    b = user_report_sampled([1, 2, 3], params, family, np.random.default_rng(5))
    assert a == b
    assert a.ordering.is_permutation()
    assert 0 <= a.sampled_row < 4 and 0 <= a.sampled_col < 128


def test_full_report_noiseless(rng, family):
    params = PrivacyParams(3.0, 4, 128)
    rep = user_report_full([3, 9], params, family, rng, flip_prob=0.0)
    assert np.array_equal(rep.perturbed_cells, 2 * encode([3, 9], family).cells.astype(int) - 1)


def test_full_flip_rate(rng):
    fam = make_hash_family(4, 128, 3)
    params = PrivacyParams(3.0, 4, 128)
    users = [np.array([i % 50]) for i in range(2000)]  # ~1e6 cells
    cells = encode_batch(users, fam)
    reps = simulate_full(users, params, fam, rng, cells=cells)
    flipped = np.mean(reps.cells != (2 * cells.astype(np.int8) - 1))
    q = flip_probability(3.0 / 512)
    assert abs(flipped - q) <= 3 * math.sqrt(q * (1 - q) / cells.size)


def test_full_empty_users_cell_mean(rng):
    fam = make_hash_family(2, 8, 3)
    eps = 8.0
    params = PrivacyParams(eps, 2, 8)
    users = [np.zeros(0, np.int64)] * 20_000
    reps = simulate_full(users, params, fam, rng)
    q = flip_probability(eps / 16)
    means = reps.cells.mean(axis=0)
    sigma = math.sqrt(4 * q * (1 - q) / len(users))
    assert np.all(np.abs(means + (1 - 2 * q)) <= 4 * sigma)


def test_sampled_mode_spends_whole_budget_on_one_cell(rng):
    fam = make_hash_family(2, 8, 3)
    eps = 1.0
    users = [np.zeros(0, np.int64)] * 100_000
    reps = simulate_sampled(users, PrivacyParams(eps, 2, 8), fam, rng)
    q = flip_probability(eps)
    assert abs(np.mean(reps.values == 1) - q) <= 3 * math.sqrt(q * (1 - q) / len(users))
    # sampled cell is uniform over the K*M cells
    flat = reps.rows * 8 + reps.cols
    counts = np.bincount(flat, minlength=16)
    assert counts.min() > 0.9 * len(users) / 16


# -- collector -------------------------------------------------------------


def test_sampled_formula_endpoints():
    params = PrivacyParams(3.0, 2, 4)
    assert calibrate_sampled(np.zeros(3), np.full(3, 100), 1000, params).tolist() == [0.5] * 3
    assert calibrate_sampled(np.zeros(3), np.zeros(3), 1000, params, "reports").tolist() == [0.5] * 3
    c = (math.exp(3) + 1) / (math.exp(3) - 1)
    assert calibrate_sampled(np.array([100]), np.array([100]), 1000, params)[0] == pytest.approx(0.5 * (c + 1))
    assert calibrate_sampled(np.array([125]), np.array([0]), 1000, params, "reports")[0] == pytest.approx(0.5 * (c + 1))
    big = PrivacyParams(40.0, 2, 4)
    assert calibrate_sampled(np.array([7]), np.array([7]), 10, big)[0] == pytest.approx(1.0)


def test_sampled_rejects_unknown_normalisation():
    with pytest.raises(ValueError):
        calibrate_sampled(np.zeros(1), np.ones(1), 1, PrivacyParams(1.0, 1, 2), "bogus")


def test_sampled_unbiased_all_users_hold_item():
    n, eps, trials = 10_000, 3.0, 200
    fam = make_hash_family(2, 4, 8)
    params = PrivacyParams(eps, 2, 4)
    users = [np.array([0])] * n
    cells = encode_batch(users, fam)
    rng = np.random.default_rng(77)
    est = [
        collector_estimate_sampled(simulate_sampled(users, params, fam, rng, cells=cells), fam, [0], params)[0]
        for _ in range(trials)
    ]
    var = 8 * math.exp(eps) / (n * (math.exp(eps) - 1) ** 2)
    assert abs(np.mean(est) - 1.0) <= 3 * math.sqrt(var / trials)


@pytest.mark.parametrize("normalize", ["matches", "reports"])
def test_sampled_unbiased_mixed_dataset(normalize):
    rng = np.random.default_rng(2024)
    n, d, trials = 200, 20, 2000
    fam = make_hash_family(2, 8, 5)
    params = PrivacyParams(3.0, 2, 8)
    users = random_users(rng, n, d, 6)
    target = exact_sketch_frequency(users, fam, range(d))
    cells = encode_batch(users, fam)
    est = np.array([
        collector_estimate_sampled(simulate_sampled(users, params, fam, rng, cells=cells), fam, np.arange(d), params, normalize).values
        for _ in range(trials)
    ])
    se = est.std(axis=0, ddof=1) / math.sqrt(trials)
    z = (est.mean(axis=0) - target) / se
    # items sharing cells give correlated z-scores, so only a per-item bound
    assert np.all(np.abs(z) <= 4), z


def test_full_noiseless_endpoint():
    fam = make_hash_family(2, 4, 1)
    eps = 3.0
    params = PrivacyParams(eps, 2, 4)
    rng = np.random.default_rng(0)
    users = [np.array([0])] * 50
    est = collector_estimate_full(simulate_full(users, params, fam, rng, flip_prob=0.0), fam, [0], params)[0]
    b = eps / 8
    assert est == pytest.approx(0.5 * ((math.exp(b) + 1) / (math.exp(b) - 1) + 1))


def test_full_unbiased_and_variance_small_instance():
    rng = np.random.default_rng(31)
    n, d, trials = 300, 15, 1000
    fam = make_hash_family(2, 4, 3)
    eps = 16.0
    params = PrivacyParams(eps, 2, 4)
    users = random_users(rng, n, d, 4)
    target = exact_sketch_frequency(users, fam, range(d))
    cells = encode_batch(users, fam)
    est = np.array([
        collector_estimate_full(simulate_full(users, params, fam, rng, cells=cells), fam, np.arange(d), params).values
        for _ in range(trials)
    ])
    b = eps / 8
    var = math.exp(b) / (n * (math.exp(b) - 1) ** 2)
    z = (est.mean(axis=0) - target) / math.sqrt(var / trials)
    assert np.all(np.abs(z) <= 3.5), z
    assert est.var(axis=0).mean() == pytest.approx(var, rel=0.1)


def test_collectors_accept_report_lists(rng):
    fam = make_hash_family(3, 8, 2)
    params = PrivacyParams(2.0, 3, 8)
    users = random_users(rng, 30, 40, 5)
    sampled = simulate_sampled(users, params, fam, rng)
    full = simulate_full(users, params, fam, rng)
    dom = np.arange(40)
    a = collector_estimate_sampled(sampled, fam, dom, params)
    b = collector_estimate_sampled(list(sampled), fam, dom, params)
    assert np.array_equal(a.values, b.values)
    c = collector_estimate_full(full, fam, dom, params)
    e = collector_estimate_full(list(full), fam, dom, params)
    assert np.array_equal(c.values, e.values)


def test_sampled_decode_uses_only_matching_reports(rng):
    # Hand-check C(x) and the match count for a single user.
    fam = make_hash_family(2, 4, 6)
    params = PrivacyParams(3.0, 2, 4)
    rep = user_report_sampled([1, 2], params, fam, rng)
    batch = SampledReports.from_reports([rep])
    from privsketch.protocol import sampled_counts
    from privsketch.sketch import argmin_row

    dom = np.arange(30)
    total, matches = sampled_counts(batch, fam.hash_all(dom))
    for x in dom:
        k = argmin_row(rep.ordering, fam, int(x))
        hit = (k, fam.hash(k, int(x))) == (rep.sampled_row, rep.sampled_col)
        assert matches[x] == int(hit)
        assert total[x] == (rep.perturbed_value if hit else 0)


def test_collector_errors(family):
    params = PrivacyParams(3.0, 4, 128)
    with pytest.raises(ValueError):
        collector_estimate_sampled([], family, [0], params)
    with pytest.raises(ValueError):
        collector_estimate_full([], family, [0], params)
    other = make_hash_family(2, 8, 0)
    reps = simulate_sampled([np.array([1])], PrivacyParams(3.0, 2, 8), other, np.random.default_rng(0))
    with pytest.raises(ValueError):
        collector_estimate_sampled(reps, family, [0], params)


def test_batch_shape_consistency():
    ranks = np.arange(1, 9).reshape(1, 2, 4)
    with pytest.raises(ValueError):
        FullReports.from_reports([])
    reps = FullReports(np.ones((1, 2, 4), np.int8), ranks)
    assert reps.shape == (2, 4)
    assert reps[0].ordering.is_permutation()


# -- decode first vs aggregate first ---------------------------------------


def test_decode_first_single_user_single_item():
    fam = make_hash_family(3, 8, 1)
    agg, dec, truth = decode_first_counts([np.array([4])], fam, [4])
    assert agg.tolist() == dec.tolist() == truth.tolist() == [1]


def test_decode_first_inequality_random_instances():
    rng = np.random.default_rng(0)
    for seed in range(100):
        n, d = int(rng.integers(1, 21)), int(rng.integers(1, 51))
        fam = make_hash_family(int(rng.integers(1, 4)), int(rng.integers(2, 9)), seed)
        users = random_users(rng, n, d, 8)
        agg, dec, truth = decode_first_counts(users, fam, np.arange(d))
        # brute-force reference for all three quantities
        for x in range(d):
            per_user = [[int(encode(u.tolist(), fam).cells[k, fam.hash(k, x)]) for k in range(fam.k_count)] for u in users]
            assert agg[x] == min(sum(col) for col in zip(*per_user))
            assert dec[x] == sum(min(row) for row in per_user)
            assert truth[x] == sum(x in u for u in users)
        assert check_decode_first_inequality(users, fam, np.arange(d))


def test_decode_first_strict_under_forced_collision():
    fam = make_hash_family(2, 16, 4)
    # find y colliding with x=0 in row 0 only
    h0, h1 = fam.hash(0, 0), fam.hash(1, 0)
    y = next(v for v in range(1, 10_000) if fam.hash(0, v) == h0 and fam.hash(1, v) != h1)
    z = next(v for v in range(1, 10_000) if fam.hash(1, v) == h1 and fam.hash(0, v) != h0 and v != y)
    users = [np.array([y]), np.array([z])]
    agg, dec, truth = decode_first_counts(users, fam, [0])
    # aggregate-first sees one collision in each row; decode-first sees none
    assert (agg[0], dec[0], truth[0]) == (1, 0, 0)
    assert agg[0] > dec[0]


def test_sampled_counts_match_brute_force_decoding():
    from privsketch.protocol import sampled_counts
    from privsketch.sketch import min_rows

    rng = np.random.default_rng(4)
    for seed in range(15):
        k, m = int(rng.integers(1, 5)), int(rng.integers(2, 12))
        fam = make_hash_family(k, m, seed)
        users = random_users(rng, 80, 70, 8)
        reps = simulate_sampled(users, PrivacyParams(2.0, k, m), fam, rng)
        hashes = fam.hash_all(np.arange(70))
        kmin = min_rows(reps.ranks, hashes)
        col = hashes[kmin, np.arange(70)[None, :]]
        hit = (kmin == reps.rows[:, None]) & (col == reps.cols[:, None])
        total, matches = sampled_counts(reps, hashes)
        assert np.array_equal(matches, hit.sum(axis=0))
        assert np.array_equal(total, (hit * reps.values[:, None].astype(np.int64)).sum(axis=0))
