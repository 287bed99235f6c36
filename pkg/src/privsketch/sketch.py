"""Boolean Count-Min encoding and ordering matrices.

A user's item set is encoded into a K x M matrix of 0/1 cells. The
ordering matrix is a permutation of ``1..K*M`` that ranks every zero cell
below every one cell, with uniformly random order inside each group. The
collector only needs the ranks to find, for each item, the row holding the
item's minimum cell.

Batch helpers (``encode_batch``, ``ordering_batch``, ``min_rows``) work on
``(n, K, M)`` stacks and are what the simulators use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .hashing import HashFamily, Item, as_uint64, canonical_item


@dataclass(frozen=True, eq=False)
class BoolSketch:
    cells: np.ndarray  # (K, M) uint8

    @property
    def k_count(self) -> int:
        return self.cells.shape[0]

    @property
    def m_size(self) -> int:
        return self.cells.shape[1]

    def __eq__(self, other):
        return isinstance(other, BoolSketch) and np.array_equal(self.cells, other.cells)


@dataclass(frozen=True, eq=False)
class OrderingMatrix:
    ranks: np.ndarray  # (K, M) int, a permutation of 1..K*M

    @property
    def k_count(self) -> int:
        return self.ranks.shape[0]

    @property
    def m_size(self) -> int:
        return self.ranks.shape[1]

    def __eq__(self, other):
        return isinstance(other, OrderingMatrix) and np.array_equal(self.ranks, other.ranks)

    def is_permutation(self) -> bool:
        flat = np.sort(self.ranks, axis=None)
        return bool(np.array_equal(flat, np.arange(1, flat.size + 1)))

    def is_consistent_with(self, sketch: BoolSketch) -> bool:
        """Every zero cell ranks below every one cell."""
        zeros = self.ranks[sketch.cells == 0]
        ones = self.ranks[sketch.cells == 1]
        if zeros.size == 0 or ones.size == 0:
            return True
        return bool(zeros.max() < ones.min())


def _check_dims(shape: tuple[int, int], family: HashFamily) -> None:
    if tuple(shape) != family.shape:
        raise ValueError(f"matrix shape {tuple(shape)} does not match hash family {family.shape}")


def encode(items: Iterable[Item], family: HashFamily) -> BoolSketch:
    cells = np.zeros(family.shape, dtype=np.uint8)
    x = np.array([canonical_item(i) for i in items], dtype=np.uint64)
    if x.size:
        cols = family.hash_all(x)
        rows = np.broadcast_to(np.arange(family.k_count)[:, None], cols.shape)
        cells[rows, cols] = 1
    return BoolSketch(cells)


def query_min(sketch: BoolSketch, family: HashFamily, item: Item) -> int:
    _check_dims(sketch.cells.shape, family)
    return min(int(sketch.cells[k, family.hash(k, item)]) for k in range(family.k_count))


def generate_ordering_matrix(sketch: BoolSketch, rng: np.random.Generator) -> OrderingMatrix:
    return OrderingMatrix(ordering_batch(sketch.cells[None], rng)[0])


def argmin_row(om: OrderingMatrix, family: HashFamily, item: Item) -> int:
    _check_dims(om.ranks.shape, family)
    ranks = [om.ranks[k, family.hash(k, item)] for k in range(family.k_count)]
    return int(np.argmin(ranks))


# -- batch forms -----------------------------------------------------------


def flatten_users(users: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """``(user_index, item)`` pairs for a list of per-user item arrays."""
    lengths = np.fromiter((len(u) for u in users), dtype=np.int64, count=len(users))
    owner = np.repeat(np.arange(len(users)), lengths)
    items = np.concatenate([np.asarray(u) for u in users]) if lengths.sum() else np.zeros(0, np.int64)
    return owner, items


def encode_batch(users: Sequence[np.ndarray], family: HashFamily) -> np.ndarray:
    """Stack of boolean sketches, shape ``(n, K, M)``, dtype uint8."""
    cells = np.zeros((len(users), *family.shape), dtype=np.uint8)
    owner, items = flatten_users(users)
    if items.size:
        cols = family.hash_all(as_uint64(items))  # (K, total)
        for k in range(family.k_count):
            cells[owner, k, cols[k]] = 1
    return cells


def ordering_batch(cells: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Ordering matrices for a stack of sketches, shape ``(n, K, M)``.

    Sorting by ``cell + U[0,1)`` puts all zeros before all ones and draws a
    uniform order inside each group.
    """
    n, k, m = cells.shape
    keys = cells.reshape(n, k * m) + rng.random((n, k * m))
    order = np.argsort(keys, axis=1)
    ranks = np.empty((n, k * m), dtype=np.int32)
    np.put_along_axis(ranks, order, np.arange(1, k * m + 1, dtype=np.int32)[None, :], axis=1)
    return ranks.reshape(n, k, m)


def min_rows(ranks: np.ndarray, hashes: np.ndarray) -> np.ndarray:
    """Row of each item's lowest-ranked cell, per user.

    ``ranks`` is ``(n, K, M)``, ``hashes`` is ``(K, d)``; returns ``(n, d)``.
    """
    k = hashes.shape[0]
    gathered = ranks[:, np.arange(k)[:, None], hashes]  # (n, K, d)
    return np.argmin(gathered, axis=1)


def sketch_min_values(cells: np.ndarray, hashes: np.ndarray) -> np.ndarray:
    """``min_k cells[i, k, H_k(x)]`` for every user and item, shape ``(n, d)``."""
    k = hashes.shape[0]
    return cells[:, np.arange(k)[:, None], hashes].min(axis=1)
