"""PrivSketch user side and decode-first collector.

User side: encode the item set into a boolean sketch, build the ordering
matrix, then either

* sampled mode: pick one of the K*M cells uniformly and perturb it with the
  full budget, or
* full mode (PrivSketch-noSmp): perturb every cell with budget eps/(K*M).

Collector side: for every item ``x`` and user ``i`` the ordering matrix
gives ``k_min``, the row of ``x``'s smallest original cell. The perturbed
value at ``(k_min, H_kmin(x))`` is accumulated into ``C(x)`` and the sum is
debiased per item. Nothing is aggregated across users at sketch level, so
cross-user hash collisions never enter the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .frequency import FrequencyTable
from .hashing import HashFamily, Item
from .ldp import PrivacyParams, calibration_factor, flip_probability, rr_perturb
from .sketch import (
    OrderingMatrix,
    encode,
    encode_batch,
    generate_ordering_matrix,
    min_rows,
    ordering_batch,
    sketch_min_values,
)

# Elements per (users x K x items) gather block in the decode loop.
BLOCK_ELEMENTS = 1 << 22
NORMALIZATIONS = ("matches", "reports")


@dataclass(frozen=True, eq=False)
class UserReport:
    sampled_row: int
    sampled_col: int
    perturbed_value: int
    ordering: OrderingMatrix

    def __eq__(self, other):
        return (
            isinstance(other, UserReport)
            and (self.sampled_row, self.sampled_col, self.perturbed_value)
            == (other.sampled_row, other.sampled_col, other.perturbed_value)
            and self.ordering == other.ordering
        )


@dataclass(frozen=True, eq=False)
class FullReport:
    perturbed_cells: np.ndarray  # (K, M) int8 in {-1, +1}
    ordering: OrderingMatrix

    def __post_init__(self):
        if self.perturbed_cells.shape != self.ordering.ranks.shape:
            raise ValueError("perturbed cells and ordering matrix differ in shape")

    def __eq__(self, other):
        return (
            isinstance(other, FullReport)
            and np.array_equal(self.perturbed_cells, other.perturbed_cells)
            and self.ordering == other.ordering
        )


@dataclass(eq=False)
class SampledReports:
    """Column-oriented stack of sampled-mode reports."""

    rows: np.ndarray  # (n,)
    cols: np.ndarray  # (n,)
    values: np.ndarray  # (n,) int8
    ranks: np.ndarray  # (n, K, M)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, i: int) -> UserReport:
        return UserReport(int(self.rows[i]), int(self.cols[i]), int(self.values[i]), OrderingMatrix(self.ranks[i]))

    def __iter__(self) -> Iterator[UserReport]:
        return (self[i] for i in range(len(self)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranks.shape[1], self.ranks.shape[2]

    @classmethod
    def from_reports(cls, reports: Sequence[UserReport]) -> "SampledReports":
        if not len(reports):
            raise ValueError("no reports")
        shapes = {r.ordering.ranks.shape for r in reports}
        if len(shapes) != 1:
            raise ValueError(f"reports disagree on sketch shape: {sorted(shapes)}")
        return cls(
            np.array([r.sampled_row for r in reports], dtype=np.int64),
            np.array([r.sampled_col for r in reports], dtype=np.int64),
            np.array([r.perturbed_value for r in reports], dtype=np.int8),
            np.stack([r.ordering.ranks for r in reports]),
        )


@dataclass(eq=False)
class FullReports:
    cells: np.ndarray  # (n, K, M) int8 in {-1, +1}
    ranks: np.ndarray  # (n, K, M)

    def __len__(self) -> int:
        return len(self.cells)

    def __getitem__(self, i: int) -> FullReport:
        return FullReport(self.cells[i], OrderingMatrix(self.ranks[i]))

    def __iter__(self) -> Iterator[FullReport]:
        return (self[i] for i in range(len(self)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape[1], self.cells.shape[2]

    @classmethod
    def from_reports(cls, reports: Sequence[FullReport]) -> "FullReports":
        if not len(reports):
            raise ValueError("no reports")
        shapes = {r.perturbed_cells.shape for r in reports}
        if len(shapes) != 1:
            raise ValueError(f"reports disagree on sketch shape: {sorted(shapes)}")
        return cls(
            np.stack([r.perturbed_cells for r in reports]).astype(np.int8),
            np.stack([r.ordering.ranks for r in reports]),
        )


def _check_params(params: PrivacyParams, family: HashFamily) -> None:
    if (params.k_count, params.m_size) != family.shape:
        raise ValueError(f"privacy params {params.k_count}x{params.m_size} do not match family {family.shape}")


# -- user side -------------------------------------------------------------


def user_report_sampled(
    items: Sequence[Item],
    params: PrivacyParams,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
) -> UserReport:
    _check_params(params, family)
    sketch = encode(items, family)
    ordering = generate_ordering_matrix(sketch, rng)
    q = flip_probability(params.counter_epsilon(sampled=True)) if flip_prob is None else flip_prob
    k, m = divmod(int(rng.integers(params.cells)), params.m_size)
    value = int(rr_perturb(sketch.cells[k, m], q, rng))
    return UserReport(k, m, value, ordering)


def user_report_full(
    items: Sequence[Item],
    params: PrivacyParams,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
) -> FullReport:
    _check_params(params, family)
    sketch = encode(items, family)
    ordering = generate_ordering_matrix(sketch, rng)
    q = flip_probability(params.counter_epsilon(sampled=False)) if flip_prob is None else flip_prob
    return FullReport(rr_perturb(sketch.cells, q, rng), ordering)


def simulate_sampled(
    users: Sequence[np.ndarray],
    params: PrivacyParams,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
    cells: Optional[np.ndarray] = None,
) -> SampledReports:
    """Sampled-mode reports for many users at once.

    ``cells`` may carry precomputed sketches (``encode_batch(users, family)``)
    when the same population is simulated repeatedly.
    """
    _check_params(params, family)
    if cells is None:
        cells = encode_batch(users, family)
    n = cells.shape[0]
    ranks = ordering_batch(cells, rng)
    flat = rng.integers(params.cells, size=n)
    rows, cols = np.divmod(flat, params.m_size)
    q = flip_probability(params.counter_epsilon(sampled=True)) if flip_prob is None else flip_prob
    values = rr_perturb(cells[np.arange(n), rows, cols], q, rng)
    return SampledReports(rows, cols, values, ranks)


def simulate_full(
    users: Sequence[np.ndarray],
    params: PrivacyParams,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
    cells: Optional[np.ndarray] = None,
) -> FullReports:
    _check_params(params, family)
    if cells is None:
        cells = encode_batch(users, family)
    ranks = ordering_batch(cells, rng)
    q = flip_probability(params.counter_epsilon(sampled=False)) if flip_prob is None else flip_prob
    return FullReports(rr_perturb(cells, q, rng), ranks)


# -- collector side --------------------------------------------------------


def _blocks(n: int, k: int, d: int, budget: int = BLOCK_ELEMENTS):
    item_step = max(1, min(d, budget // k))
    user_step = max(1, budget // (k * item_step))
    for c in range(0, d, item_step):
        for a in range(0, n, user_step):
            yield slice(a, min(n, a + user_step)), slice(c, min(d, c + item_step))


def sampled_counts(reports: SampledReports, hashes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-item ``C(x)`` (sum of matching perturbed values) and match counts.

    A report matches ``x`` when its sampled cell is ``(k_min, H_kmin(x))``.
    Only items hashing to the sampled cell can match, so reports are grouped
    by cell and tested against that cell's items alone: O(n*d*K/M) work.
    Both outputs are int64 and additive over disjoint sets of users.
    """
    k, d = hashes.shape
    m = reports.shape[1]
    total = np.zeros(d, dtype=np.int64)
    matches = np.zeros(d, dtype=np.int64)
    if len(reports) == 0:
        return total, matches
    flat_ranks = reports.ranks.reshape(len(reports), k * m)
    # flat cell id of every (row, item); reports grouped by their sampled cell
    item_cells = hashes + (np.arange(k) * m)[:, None]
    report_cells = reports.rows * m + reports.cols
    order = np.argsort(report_cells, kind="stable")
    bounds = np.searchsorted(report_cells[order], np.arange(k * m + 1))
    for row in range(k):
        by_col = np.argsort(hashes[row], kind="stable")
        col_bounds = np.searchsorted(hashes[row][by_col], np.arange(m + 1))
        for col in range(m):
            cell = row * m + col
            who = order[bounds[cell] : bounds[cell + 1]]
            xs = by_col[col_bounds[col] : col_bounds[col + 1]]
            if who.size == 0 or xs.size == 0:
                continue
            step = max(1, BLOCK_ELEMENTS // (k * xs.size))
            cells_x = item_cells[:, xs]
            for a in range(0, who.size, step):
                us = who[a : a + step]
                r = flat_ranks[us]
                best = r[:, cells_x].min(axis=1)  # (u, |xs|)
                hit = best == r[:, cell][:, None]
                total[xs] += (hit * reports.values[us, None].astype(np.int64)).sum(axis=0)
                matches[xs] += hit.sum(axis=0)
    return total, matches


def full_counts(reports: FullReports, hashes: np.ndarray) -> np.ndarray:
    """Per-item ``C(x) = sum_i Xhat_i[k_min, H_kmin(x)]`` (int64, additive)."""
    k, d = hashes.shape
    n = len(reports)
    total = np.zeros(d, dtype=np.int64)
    for us, xs in _blocks(n, k, d):
        h = hashes[:, xs]
        kmin = min_rows(reports.ranks[us], h)
        col = h[kmin, np.arange(h.shape[1])[None, :]]
        users = np.arange(us.start, us.stop)[:, None]
        total[xs] += reports.cells[users, kmin, col].astype(np.int64).sum(axis=0)
    return total


def calibrate_sampled(
    total: np.ndarray,
    matches: np.ndarray,
    n: int,
    params: PrivacyParams,
    normalize: str = "matches",
) -> np.ndarray:
    """Debias sampled-mode sums.

    ``normalize="matches"`` divides each item's sum by the number of reports
    that landed on its min cell; items with no such report get 0.5.
    ``normalize="reports"`` divides by ``n / (K*M)``, the expected number.
    Both are unbiased; the first has variance ~ K*M*e^eps/(n(e^eps-1)^2)
    at frequencies 0 or 1, the second carries an extra ~K*M/(4n) term from
    the random number of matches.
    """
    c = calibration_factor(params.counter_epsilon(sampled=True))
    total = np.asarray(total, dtype=np.float64)
    if normalize == "matches":
        matches = np.asarray(matches, dtype=np.float64)
        ratio = np.divide(total, matches, out=np.zeros_like(total), where=matches > 0)
    elif normalize == "reports":
        ratio = params.cells * total / n
    else:
        raise ValueError(f"normalize must be one of {NORMALIZATIONS}, got {normalize!r}")
    return 0.5 * (c * ratio + 1.0)


def calibrate_full(total: np.ndarray, n: int, params: PrivacyParams) -> np.ndarray:
    c = calibration_factor(params.counter_epsilon(sampled=False))
    return 0.5 * (c * np.asarray(total, dtype=np.float64) / n + 1.0)


def _domain_hashes(family: HashFamily, domain) -> tuple[np.ndarray, np.ndarray]:
    domain = np.asarray(domain, dtype=np.int64)
    return domain, family.hash_all(domain)


def collector_estimate_sampled(
    reports: Union[SampledReports, Sequence[UserReport]],
    family: HashFamily,
    domain,
    params: PrivacyParams,
    normalize: str = "matches",
) -> FrequencyTable:
    if not isinstance(reports, SampledReports):
        reports = SampledReports.from_reports(list(reports))
    if len(reports) == 0:
        raise ValueError("no reports")
    if reports.shape != family.shape:
        raise ValueError(f"report shape {reports.shape} does not match family {family.shape}")
    _check_params(params, family)
    domain, hashes = _domain_hashes(family, domain)
    total, matches = sampled_counts(reports, hashes)
    return FrequencyTable(domain, calibrate_sampled(total, matches, len(reports), params, normalize))


def collector_estimate_full(
    reports: Union[FullReports, Sequence[FullReport]],
    family: HashFamily,
    domain,
    params: PrivacyParams,
) -> FrequencyTable:
    if not isinstance(reports, FullReports):
        reports = FullReports.from_reports(list(reports))
    if len(reports) == 0:
        raise ValueError("no reports")
    if reports.shape != family.shape:
        raise ValueError(f"report shape {reports.shape} does not match family {family.shape}")
    _check_params(params, family)
    domain, hashes = _domain_hashes(family, domain)
    total = full_counts(reports, hashes)
    return FrequencyTable(domain, calibrate_full(total, len(reports), params))


# -- decode-first vs aggregate-first ---------------------------------------


def decode_first_counts(users: Sequence[np.ndarray], family: HashFamily, domain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unperturbed per-item counts under both workflows.

    Returns ``(min_k sum_i X_i, sum_i min_k X_i, n * f(x))`` over ``domain``.
    """
    domain = np.asarray(domain, dtype=np.int64)
    hashes = family.hash_all(domain)
    cells = encode_batch(users, family)
    k = family.k_count
    per_user = cells[:, np.arange(k)[:, None], hashes]  # (n, K, d)
    aggregate_first = per_user.sum(axis=0, dtype=np.int64).min(axis=0)
    decode_first = per_user.min(axis=1).sum(axis=0, dtype=np.int64)
    truth = np.array([sum(int(np.isin(x, u)) for u in users) for x in domain], dtype=np.int64)
    return aggregate_first, decode_first, truth


def check_decode_first_inequality(dataset, family: HashFamily, domain=None) -> bool:
    """Whether aggregate-first >= decode-first >= true count for every item."""
    users = getattr(dataset, "users", dataset)
    if domain is None:
        size = getattr(dataset, "domain_size", None)
        if size is None:
            size = max((int(u.max()) + 1 for u in users if len(u)), default=0)
        domain = np.arange(size)
    agg, dec, truth = decode_first_counts([np.asarray(u) for u in users], family, domain)
    return bool(np.all(agg >= dec) and np.all(dec >= truth))


def sketch_frequencies(users: Sequence[np.ndarray], family: HashFamily, domain) -> np.ndarray:
    """``f~(x) = (1/n) sum_i min_k X_i[k, H_k(x)]``, the target both estimators debias to."""
    domain = np.asarray(domain, dtype=np.int64)
    cells = encode_batch(users, family)
    return sketch_min_values(cells, family.hash_all(domain)).mean(axis=0)
