"""Randomized response on bits and optimized local hashing (OLH)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hashing import Item, as_uint64, canonical_item, mix64


@dataclass(frozen=True)
class PrivacyParams:
    """Total per-user budget and the sketch shape it is spread over."""

    epsilon: float
    k_count: int
    m_size: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.k_count < 1 or self.m_size < 2:
            raise ValueError("k_count >= 1 and m_size >= 2 required")

    @property
    def cells(self) -> int:
        return self.k_count * self.m_size

    def counter_epsilon(self, sampled: bool) -> float:
        """Budget spent on each reported counter.

        Sampling reports one counter with the whole budget; without it the
        budget is split evenly over all K*M counters (sequential composition).
        """
        return self.epsilon if sampled else self.epsilon / self.cells


def flip_probability(eps_effective: float) -> float:
    """``1 / (e^eps + 1)``, the RR flip probability for one bit."""
    if not eps_effective > 0:
        raise ValueError(f"budget must be positive, got {eps_effective}")
    if eps_effective > 700:
        return 0.0
    return 1.0 / (math.exp(eps_effective) + 1.0)


def calibration_factor(eps_effective: float) -> float:
    """``(e^eps + 1) / (e^eps - 1) = 1 / (p - q)``."""
    if not eps_effective > 0:
        raise ValueError(f"budget must be positive, got {eps_effective}")
    return 1.0 / math.tanh(eps_effective / 2.0)


def rr_perturb_bit(bit: int, q: float, rng: np.random.Generator) -> int:
    """Report ``2*bit - 1``, negated with probability ``q``."""
    signed = 2 * int(bit) - 1
    return -signed if rng.random() < q else signed


def rr_perturb(bits: np.ndarray, q: float, rng: np.random.Generator) -> np.ndarray:
    """Vectorised ``rr_perturb_bit``; returns int8 values in {-1, +1}."""
    signed = 2 * np.asarray(bits, dtype=np.int8) - 1
    if q <= 0:
        return signed
    flips = rng.random(signed.shape) < q
    return np.where(flips, -signed, signed).astype(np.int8)


# -- optimized local hashing -----------------------------------------------


def olh_bucket_count(epsilon: float) -> int:
    return max(2, int(round(math.exp(epsilon))) + 1)


def olh_keep_probability(epsilon: float, g: int) -> float:
    e = math.exp(epsilon)
    return e / (e + g - 1)


def olh_hash(user_seeds, item: Item, g: int) -> np.ndarray:
    """Bucket of ``item`` under each user's local hash (vectorised over seeds)."""
    keys = mix64(as_uint64(user_seeds))
    x = np.uint64(canonical_item(item))
    return (mix64(keys ^ x) % np.uint64(g)).astype(np.int64)


def olh_hash_items(user_seeds, items, g: int) -> np.ndarray:
    """Bucket of each user's own item under that user's hash."""
    keys = mix64(as_uint64(user_seeds))
    return (mix64(keys ^ as_uint64(items)) % np.uint64(g)).astype(np.int64)


def olh_perturb(
    item: Item,
    epsilon: float,
    user_seed: int,
    rng: np.random.Generator,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> tuple[int, int]:
    """Hash ``item`` into ``[0, g)`` with the user's seed, then apply g-ary RR."""
    g = olh_bucket_count(epsilon) if g is None else g
    p = olh_keep_probability(epsilon, g) if keep_prob is None else keep_prob
    true_bucket = int(olh_hash([user_seed], item, g)[0])
    if rng.random() < p:
        return user_seed, true_bucket
    other = int(rng.integers(g - 1))
    return user_seed, other if other < true_bucket else other + 1


def olh_perturb_batch(
    items: np.ndarray,
    epsilon: float,
    user_seeds: np.ndarray,
    rng: np.random.Generator,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> np.ndarray:
    g = olh_bucket_count(epsilon) if g is None else g
    p = olh_keep_probability(epsilon, g) if keep_prob is None else keep_prob
    true_bucket = olh_hash_items(user_seeds, items, g)
    keep = rng.random(true_bucket.shape) < p
    other = rng.integers(0, g - 1, size=true_bucket.shape)
    other = np.where(other < true_bucket, other, other + 1)
    return np.where(keep, true_bucket, other)


def olh_support(user_seeds: np.ndarray, buckets: np.ndarray, item: Item, g: int) -> int:
    """Number of reports whose bucket equals the user-hash of ``item``."""
    return int(np.count_nonzero(olh_hash(user_seeds, item, g) == buckets))


def olh_estimate(
    reports: Sequence[tuple[int, int]],
    item: Item,
    epsilon: float,
    n: Optional[int] = None,
    g: Optional[int] = None,
    keep_prob: Optional[float] = None,
) -> float:
    """Unbiased estimate of how many users reported ``item``."""
    seeds = np.array([r[0] for r in reports], dtype=np.uint64)
    buckets = np.array([r[1] for r in reports], dtype=np.int64)
    n = len(seeds) if n is None else n
    if n <= 0:
        raise ValueError("at least one report is required")
    g = olh_bucket_count(epsilon) if g is None else g
    p = olh_keep_probability(epsilon, g) if keep_prob is None else keep_prob
    support = olh_support(seeds, buckets, item, g)
    return olh_count_from_support(support, n, p, g)


def olh_count_from_support(support, n: int, p: float, g: int):
    return (support - n / g) / (p - 1.0 / g)
