"""Seeded 64-bit hash family shared by every user and the collector.

Each of the K functions is a splitmix64-style finalizer keyed by a
per-row 64-bit key, reduced modulo M. The arithmetic is done in numpy
``uint64`` (wrapping), so outputs are identical on every platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MIX_C1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C2 = np.uint64(0x94D049BB133111EB)

Item = Union[int, str, bytes]


def canonical_item(item: Item) -> int:
    """Map an item id to an unsigned 64-bit integer.

    Integers are taken modulo 2**64; strings and bytes go through an
    8-byte BLAKE2b digest so URL-like ids hash stably.
    """
    if isinstance(item, (bool, np.bool_)):
        raise TypeError("boolean is not a valid item id")
    if isinstance(item, (int, np.integer)):
        return int(item) & MASK64
    if isinstance(item, str):
        item = item.encode("utf-8")
    if isinstance(item, bytes):
        return int.from_bytes(hashlib.blake2b(item, digest_size=8).digest(), "little")
    raise TypeError(f"unsupported item type {type(item).__name__}")


def as_uint64(items) -> np.ndarray:
    """Vectorised ``canonical_item`` for integer arrays (wraps negatives)."""
    arr = np.asarray(items)
    if arr.dtype == np.uint64:
        return np.atleast_1d(arr)
    if arr.dtype.kind == "i":
        return np.atleast_1d(arr.astype(np.int64)).view(np.uint64)
    if arr.dtype.kind == "u":
        return np.atleast_1d(arr.astype(np.uint64))
    return np.array([canonical_item(x) for x in np.ravel(arr)], dtype=np.uint64)


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; a bijection on uint64 with good avalanche."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX_C1
        z = (z ^ (z >> np.uint64(27))) * _MIX_C2
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_keys(seed: int, count: int) -> tuple[int, ...]:
    """First ``count`` outputs of a splitmix64 stream started at ``seed``."""
    state = seed & MASK64
    keys = []
    for _ in range(count):
        state = (state + GOLDEN_GAMMA) & MASK64
        keys.append(_mix64_int(state))
    return tuple(keys)


@dataclass(frozen=True)
class HashFamily:
    """K hash functions mapping item ids into ``[0, m_size)``.

    Row ``k`` uses ``keys[k]``; the keys depend only on ``(seed, k)`` so
    families with the same seed but different K share their leading rows.
    """

    k_count: int
    m_size: int
    seed: int
    keys: tuple[int, ...]

    def __post_init__(self):
        if self.k_count < 1:
            raise ValueError(f"k_count must be >= 1, got {self.k_count}")
        if self.m_size < 2:
            raise ValueError(f"m_size must be >= 2, got {self.m_size}")
        if len(self.keys) != self.k_count:
            raise ValueError("one key per hash function is required")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.k_count, self.m_size)

    def hash(self, k: int, item: Item) -> int:
        if not 0 <= k < self.k_count:
            raise IndexError(f"hash index {k} out of range [0, {self.k_count})")
        z = np.array([canonical_item(item) ^ self.keys[k]], dtype=np.uint64)
        return int(mix64(z)[0] % np.uint64(self.m_size))

    def hash_row(self, k: int, items) -> np.ndarray:
        """Column indices of ``items`` under function ``k`` (int64 array)."""
        if not 0 <= k < self.k_count:
            raise IndexError(f"hash index {k} out of range [0, {self.k_count})")
        z = as_uint64(items) ^ np.uint64(self.keys[k])
        return (mix64(z) % np.uint64(self.m_size)).astype(np.int64)

    def hash_all(self, items) -> np.ndarray:
        """``(K, len(items))`` matrix of column indices."""
        x = as_uint64(items)
        keys = np.array(self.keys, dtype=np.uint64)[:, None]
        return (mix64(x[None, :] ^ keys) % np.uint64(self.m_size)).astype(np.int64)


def make_hash_family(k_count: int, m_size: int, seed: int) -> HashFamily:
    if k_count < 1:
        raise ValueError(f"k_count must be >= 1, got {k_count}")
    if m_size < 2:
        raise ValueError(f"m_size must be >= 2, got {m_size}")
    seed &= MASK64
    return HashFamily(k_count, m_size, seed, derive_keys(seed, k_count))


def hash(family: HashFamily, k: int, item: Item) -> int:  # noqa: A001
    return family.hash(k, item)


def iter_columns(family: HashFamily, item: Item) -> Iterable[tuple[int, int]]:
    """Yield ``(k, column)`` for every row of the family."""
    for k in range(family.k_count):
        yield k, family.hash(k, item)
