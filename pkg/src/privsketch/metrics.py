"""Accuracy measures: MSE over the domain, top-k variance and NCR."""

from __future__ import annotations

import math

import numpy as np

from .frequency import FrequencyTable

MISSING = float("nan")


def mse(est: FrequencyTable, truth: FrequencyTable, domain=None) -> float:
    domain = truth.items if domain is None else np.asarray(domain, dtype=np.int64)
    if domain.size == 0:
        raise ValueError("empty domain")
    try:
        diff = est.aligned(domain) - truth.aligned(domain)
    except KeyError as exc:
        raise ValueError(f"domain mismatch: {exc.args[0]}") from None
    return float(np.mean(diff * diff))


def topk(est: FrequencyTable, k: int) -> list[tuple[int, float]]:
    """The ``k`` largest entries, ordered by (frequency desc, item asc)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    order = np.lexsort((est.items, -est.values))[:k]
    return [(int(est.items[i]), float(est.values[i])) for i in order]


def var_topk(est: FrequencyTable, truth: FrequencyTable, n: int, k: int) -> float:
    """Mean squared count error over items in both top-k lists.

    Returns NaN when the two lists share no item.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    common = {x for x, _ in topk(est, k)} & {x for x, _ in topk(truth, k)}
    if not common:
        return MISSING
    errs = [(n * est[x] - n * truth[x]) ** 2 for x in sorted(common)]
    return float(np.mean(errs))


def ncr(est: FrequencyTable, truth: FrequencyTable, k: int) -> float:
    """Rank-weighted share of the true top-k found in the estimated top-k.

    An item at true rank ``i`` (1-based) scores ``k + 1 - i``; anything
    outside the true top-k scores 0.
    """
    true_top = topk(truth, k)
    quality = {x: k - i for i, (x, _) in enumerate(true_top)}
    found = sum(quality.get(x, 0) for x, _ in topk(est, k))
    denom = sum(quality.values())
    return found / denom if denom else MISSING


def is_missing(value: float) -> bool:
    return isinstance(value, float) and math.isnan(value)
