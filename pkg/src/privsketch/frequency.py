from __future__ import annotations

from collections.abc import Mapping
from typing import Iterator

import numpy as np


class FrequencyTable(Mapping):
    """Item -> estimated frequency, backed by two aligned arrays.

    Estimates are raw (possibly outside [0, 1]); use :meth:`clipped` for the
    post-processed view.
    """

    def __init__(self, items, values):
        self.items = np.asarray(items, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.items.shape != self.values.shape or self.items.ndim != 1:
            raise ValueError("items and values must be aligned 1-d arrays")
        self._index: dict[int, int] | None = None

    def _lookup(self) -> dict[int, int]:
        if self._index is None:
            self._index = {int(x): i for i, x in enumerate(self.items)}
        return self._index

    def __getitem__(self, item) -> float:
        return float(self.values[self._lookup()[int(item)]])

    def __iter__(self) -> Iterator[int]:
        return (int(x) for x in self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __repr__(self) -> str:
        return f"FrequencyTable({len(self)} items)"

    def aligned(self, domain) -> np.ndarray:
        """Values in the order of ``domain``; raises KeyError on a missing item."""
        domain = np.asarray(domain, dtype=np.int64)
        if np.array_equal(domain, self.items):
            return self.values
        index = self._lookup()
        try:
            return self.values[[index[int(x)] for x in domain]]
        except KeyError as exc:
            raise KeyError(f"item {exc.args[0]} not in frequency table") from None

    def clipped(self) -> "FrequencyTable":
        return FrequencyTable(self.items, np.clip(self.values, 0.0, 1.0))

    @classmethod
    def from_dict(cls, mapping) -> "FrequencyTable":
        items = np.fromiter(mapping.keys(), dtype=np.int64, count=len(mapping))
        values = np.fromiter(mapping.values(), dtype=np.float64, count=len(mapping))
        return cls(items, values)
