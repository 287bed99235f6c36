"""Competitor protocols: Multi-PCMS-Mean, Multi-PCMS-Min and PS-OLH.

Multi-PCMS-Mean is the multi-item extension of Apple's private count-mean
sketch: one randomly chosen row is sent, each of its M entries perturbed with
budget eps/M. Multi-PCMS-Min sends the whole sketch (eps/(K*M) per cell) and
the collector aggregates first, then takes the row minimum. PS-OLH pads or
truncates each set to a fixed length, samples one element and reports it
through OLH.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .frequency import FrequencyTable
from .hashing import HashFamily, Item, as_uint64, mix64
from .ldp import (
    calibration_factor,
    flip_probability,
    olh_bucket_count,
    olh_count_from_support,
    olh_keep_probability,
    olh_perturb,
    olh_perturb_batch,
    rr_perturb,
)
from .protocol import FullReports
from .sketch import encode, encode_batch

# Padding items live far above any real domain and are never queried.
DUMMY_BASE = 1 << 62


def _debias_factor(eps_effective: float, flip_prob: Optional[float]) -> float:
    """``1 / (p - q)`` for the given budget, or for an explicit flip probability."""
    if flip_prob is None:
        return calibration_factor(eps_effective)
    return 1.0 / (1.0 - 2.0 * flip_prob)


# -- Multi-PCMS-Mean -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcmsReport:
    chosen_row: int
    row_values: np.ndarray  # (M,) int8 in {-1, +1}


@dataclass(eq=False)
class PcmsReports:
    rows: np.ndarray  # (n,)
    values: np.ndarray  # (n, M) int8

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_reports(cls, reports: Sequence[PcmsReport]) -> "PcmsReports":
        return cls(
            np.array([r.chosen_row for r in reports], dtype=np.int64),
            np.stack([np.asarray(r.row_values, dtype=np.int8) for r in reports]),
        )


def multi_pcms_user(
    items: Sequence[Item],
    epsilon: float,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
) -> PcmsReport:
    k = int(rng.integers(family.k_count))
    row = encode(items, family).cells[k]
    q = flip_probability(epsilon / family.m_size) if flip_prob is None else flip_prob
    return PcmsReport(k, rr_perturb(row, q, rng))


def simulate_multi_pcms(
    users: Sequence[np.ndarray],
    epsilon: float,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
    cells: Optional[np.ndarray] = None,
) -> PcmsReports:
    if cells is None:
        cells = encode_batch(users, family)
    n = cells.shape[0]
    rows = rng.integers(family.k_count, size=n)
    q = flip_probability(epsilon / family.m_size) if flip_prob is None else flip_prob
    return PcmsReports(rows, rr_perturb(cells[np.arange(n), rows], q, rng))


def pcms_row_sums(reports: PcmsReports, k_count: int) -> tuple[np.ndarray, np.ndarray]:
    """``(K, M)`` sums of reported rows and the number of users per row."""
    m = reports.values.shape[1]
    sums = np.zeros((k_count, m), dtype=np.int64)
    np.add.at(sums, reports.rows, reports.values.astype(np.int64))
    return sums, np.bincount(reports.rows, minlength=k_count)


def multi_pcms_mean_estimate(
    reports: Union[PcmsReports, Sequence[PcmsReport]],
    family: HashFamily,
    domain,
    epsilon: float,
    n: Optional[int] = None,
    flip_prob: Optional[float] = None,
) -> FrequencyTable:
    if not isinstance(reports, PcmsReports):
        reports = PcmsReports.from_reports(list(reports))
    n = len(reports) if n is None else n
    if n <= 0:
        raise ValueError("n must be positive")
    sums, per_row = pcms_row_sums(reports, family.k_count)
    return pcms_mean_from_sums(sums, per_row, family, domain, epsilon, n, flip_prob)


def pcms_mean_from_sums(sums, per_row, family: HashFamily, domain, epsilon: float, n: int, flip_prob=None) -> FrequencyTable:
    c = _debias_factor(epsilon / family.m_size, flip_prob)
    # Debiased count of ones per cell, scaled by K for the row choice.
    counts = family.k_count * (c * sums + per_row[:, None]) / 2.0
    domain = np.asarray(domain, dtype=np.int64)
    cells = counts[np.arange(family.k_count)[:, None], family.hash_all(domain)]  # (K, d)
    return FrequencyTable(domain, cells.mean(axis=0) / n)


# -- Multi-PCMS-Min --------------------------------------------------------


def simulate_multi_pcms_min(
    users: Sequence[np.ndarray],
    epsilon: float,
    family: HashFamily,
    rng: np.random.Generator,
    flip_prob: Optional[float] = None,
    cells: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Whole perturbed sketches, ``(n, K, M)`` int8, budget eps/(K*M) per cell."""
    if cells is None:
        cells = encode_batch(users, family)
    k, m = family.shape
    q = flip_probability(epsilon / (k * m)) if flip_prob is None else flip_prob
    return rr_perturb(cells, q, rng)


def multi_pcms_min_estimate(
    reports: Union[np.ndarray, FullReports, Sequence],
    family: HashFamily,
    domain,
    epsilon: float,
    n: Optional[int] = None,
    flip_prob: Optional[float] = None,
) -> FrequencyTable:
    """Aggregate perturbed sketches cell-wise, debias, then take min over rows."""
    if isinstance(reports, FullReports):
        cells = reports.cells
    elif isinstance(reports, np.ndarray):
        cells = reports
    else:
        cells = np.stack([getattr(r, "perturbed_cells", r) for r in reports])
    if cells.shape[1:] != family.shape:
        raise ValueError(f"sketch shape {cells.shape[1:]} does not match family {family.shape}")
    n = cells.shape[0] if n is None else n
    if n <= 0:
        raise ValueError("n must be positive")
    return pcms_min_from_sums(cells.sum(axis=0, dtype=np.int64), cells.shape[0], family, domain, epsilon, n, flip_prob)


def pcms_min_from_sums(sums, reports: int, family: HashFamily, domain, epsilon: float, n: int, flip_prob=None) -> FrequencyTable:
    """``sums`` is the cell-wise total of ``reports`` perturbed sketches."""
    k, m = family.shape
    c = _debias_factor(epsilon / (k * m), flip_prob)
    counts = (c * sums + reports) / 2.0
    domain = np.asarray(domain, dtype=np.int64)
    est = counts[np.arange(k)[:, None], family.hash_all(domain)].min(axis=0)
    return FrequencyTable(domain, est / n)


# -- PS-OLH ----------------------------------------------------------------


@dataclass(frozen=True)
class PsOlhReport:
    user_seed: int
    bucket: int


@dataclass(eq=False)
class PsOlhReports:
    seeds: np.ndarray  # (n,) uint64
    buckets: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.seeds)

    @classmethod
    def from_reports(cls, reports: Sequence[PsOlhReport]) -> "PsOlhReports":
        return cls(
            np.array([r.user_seed for r in reports], dtype=np.uint64),
            np.array([r.bucket for r in reports], dtype=np.int64),
        )


def pad_and_sample(items: Sequence[Item], pad_length: int, rng: np.random.Generator) -> Item:
    """Pad to ``pad_length`` with distinct dummies (or truncate), then draw one element."""
    if pad_length < 1:
        raise ValueError(f"pad_length must be >= 1, got {pad_length}")
    items = list(items)
    if len(items) > pad_length:
        keep = rng.choice(len(items), size=pad_length, replace=False)
        items = [items[i] for i in keep]
    padded = items + [DUMMY_BASE + j for j in range(pad_length - len(items))]
    return padded[int(rng.integers(pad_length))]


def ps_olh_user(
    items: Sequence[Item],
    pad_length: int,
    epsilon: float,
    rng: np.random.Generator,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> PsOlhReport:
    chosen = pad_and_sample(items, pad_length, rng)
    seed = int(rng.integers(0, 2**64, dtype=np.uint64))
    seed, bucket = olh_perturb(chosen, epsilon, seed, rng, g=g, keep_prob=keep_prob)
    return PsOlhReport(seed, bucket)


def simulate_ps_olh(
    users: Sequence[np.ndarray],
    pad_length: int,
    epsilon: float,
    rng: np.random.Generator,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> PsOlhReports:
    """Batch PS-OLH.

    Truncating to ``pad_length`` and then drawing uniformly is the same as a
    uniform draw over the whole set, so long sets skip the truncation step.
    """
    if pad_length < 1:
        raise ValueError(f"pad_length must be >= 1, got {pad_length}")
    n = len(users)
    lengths = np.fromiter((len(u) for u in users), dtype=np.int64, count=n)
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]]) if n else np.zeros(0, np.int64)
    flat = np.concatenate([np.asarray(u, dtype=np.int64) for u in users]) if lengths.sum() else np.zeros(1, np.int64)
    pick = rng.integers(0, np.maximum(lengths, pad_length))
    real = pick < lengths
    chosen = np.where(real, flat[np.where(real, offsets + pick, 0)], DUMMY_BASE + pick - lengths)
    seeds = rng.integers(0, 2**64, size=n, dtype=np.uint64)
    buckets = olh_perturb_batch(chosen, epsilon, seeds, rng, g=g, keep_prob=keep_prob)
    return PsOlhReports(seeds, buckets)


def olh_supports(reports: PsOlhReports, domain, g: int, block: int = 1 << 22) -> np.ndarray:
    """Support count for every domain item: O(n*d) local-hash evaluations."""
    domain = as_uint64(np.asarray(domain, dtype=np.int64))
    keys = mix64(as_uint64(reports.seeds))
    support = np.zeros(domain.size, dtype=np.int64)
    step = max(1, block // max(1, len(keys)))
    g64 = np.uint64(g)
    for start in range(0, domain.size, step):
        x = domain[start : start + step]
        buckets = (mix64(keys[:, None] ^ x[None, :]) % g64).astype(np.int64)
        support[start : start + step] = (buckets == reports.buckets[:, None]).sum(axis=0)
    return support


def ps_olh_estimate(
    reports: Union[PsOlhReports, Sequence[PsOlhReport]],
    domain,
    pad_length: int,
    epsilon: float,
    n: Optional[int] = None,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> FrequencyTable:
    if not isinstance(reports, PsOlhReports):
        reports = PsOlhReports.from_reports(list(reports))
    n = len(reports) if n is None else n
    if n <= 0:
        raise ValueError("n must be positive")
    g = olh_bucket_count(epsilon) if g is None else g
    p = olh_keep_probability(epsilon, g) if keep_prob is None else keep_prob
    domain = np.asarray(domain, dtype=np.int64)
    counts = olh_count_from_support(olh_supports(reports, domain, g), n, p, g)
    return FrequencyTable(domain, pad_length * counts / n)
