"""Set-valued user datasets: synthetic Zipf generation and transaction files."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .frequency import FrequencyTable


@dataclass
class Dataset:
    """One sorted, duplicate-free item array per user; items in ``[0, domain_size)``."""

    users: list[np.ndarray]
    domain_size: int
    id_map: dict[int, int] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.users = [np.unique(np.asarray(u, dtype=np.int64)) for u in self.users]
        if self.domain_size < 1:
            raise ValueError("domain_size must be >= 1")
        for i, u in enumerate(self.users):
            if u.size and (u[0] < 0 or u[-1] >= self.domain_size):
                raise ValueError(f"user {i} holds an item outside [0, {self.domain_size})")

    @property
    def n(self) -> int:
        return len(self.users)

    @property
    def lengths(self) -> np.ndarray:
        return np.fromiter((len(u) for u in self.users), dtype=np.int64, count=self.n)

    @property
    def domain(self) -> np.ndarray:
        return np.arange(self.domain_size, dtype=np.int64)

    def item_counts(self) -> np.ndarray:
        """Number of users holding each item."""
        if not self.n:
            return np.zeros(self.domain_size, dtype=np.int64)
        flat = np.concatenate(self.users) if self.lengths.sum() else np.zeros(0, np.int64)
        return np.bincount(flat, minlength=self.domain_size)

    def subset(self, n: int) -> "Dataset":
        return Dataset(self.users[:n], self.domain_size)


def zipf_probabilities(d: int, s: float) -> np.ndarray:
    weights = np.arange(1, d + 1, dtype=np.float64) ** -s
    return weights / weights.sum()


def gen_zipf(n: int, d: int, zipf_s: float = 1.1, draws_per_user: int = 100, seed=0) -> Dataset:
    """Each user draws ``draws_per_user`` items i.i.d. from a Zipf law truncated to ``[0, d)``.

    Item 0 is the most popular. Duplicate draws collapse, so set lengths
    vary across users.
    """
    if n < 1 or d < 1:
        raise ValueError(f"n and d must be >= 1, got n={n}, d={d}")
    if not zipf_s > 0:
        raise ValueError(f"zipf_s must be positive, got {zipf_s}")
    if draws_per_user < 0:
        raise ValueError(f"draws_per_user must be >= 0, got {draws_per_user}")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(zipf_probabilities(d, zipf_s))
    cdf[-1] = 1.0
    users = []
    chunk = max(1, (1 << 22) // max(draws_per_user, 1))
    for start in range(0, n, chunk):
        rows = min(chunk, n - start)
        draws = np.searchsorted(cdf, rng.random((rows, draws_per_user)), side="right")
        draws = np.minimum(draws, d - 1)
        draws.sort(axis=1)
        for row in draws:
            users.append(row[np.r_[True, row[1:] != row[:-1]]] if row.size else row)
    return Dataset(users, d)


def load_transactions(path) -> Dataset:
    """Parse a Kosarak-style file: one user per line, whitespace-separated ids.

    Ids are remapped to ``0..d-1`` in first-seen order; the original ids are
    kept in ``id_map`` (original -> dense). Blank lines are users with no items.
    """
    path = Path(path)
    id_map: dict[int, int] = {}
    users = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            dense = []
            for token in line.split():
                try:
                    raw = int(token, 10)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed item id {token!r}") from None
                if raw < 0:
                    raise ValueError(f"{path}:{lineno}: negative item id {raw}")
                dense.append(id_map.setdefault(raw, len(id_map)))
            users.append(np.array(dense, dtype=np.int64))
    if not users:
        raise ValueError(f"{path}: empty transaction file")
    return Dataset(users, max(len(id_map), 1), id_map=id_map)


def save_transactions(ds: Dataset, path) -> None:
    """Write dense ids, one user per line (round-trips through ``load_transactions``
    up to first-seen relabelling)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for u in ds.users:
            fh.write(" ".join(map(str, u.tolist())))
            fh.write("\n")


def true_frequencies(ds: Dataset, domain=None) -> FrequencyTable:
    counts = ds.item_counts()
    domain = ds.domain if domain is None else np.asarray(domain, dtype=np.int64)
    return FrequencyTable(domain, counts[domain] / ds.n)


def nearest_rank_percentile(values: Sequence[int], pct: float) -> int:
    ordered = np.sort(np.asarray(values))
    if ordered.size == 0:
        raise ValueError("percentile of an empty sample")
    rank = max(1, math.ceil(pct / 100.0 * ordered.size))
    return int(ordered[rank - 1])


def dataset_stats(ds: Dataset) -> tuple[int, int, int, int, int]:
    """``(n, d, max_len, min_len, p90_len)`` with the nearest-rank P90."""
    if ds.n < 1:
        raise ValueError("dataset has no users")
    lengths = ds.lengths
    return ds.n, ds.domain_size, int(lengths.max()), int(lengths.min()), nearest_rank_percentile(lengths, 90)


def stats_csv_row(ds: Dataset) -> str:
    return ",".join(str(v) for v in dataset_stats(ds))
