"""Summary statistics used by the report."""

from __future__ import annotations

import math
from typing import Mapping, Sequence


class StatsError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def mean(values: Sequence[float]) -> float:
    # fsum is correctly rounded, so the result is independent of input order
    if not values:
        raise StatsError("empty-input", "mean of no values")
    return math.fsum(values) / len(values)


def quantile(values: Sequence[float], q: float) -> float:
    """Linear interpolation between closest ranks (the common default)."""
    if not values:
        raise StatsError("empty-input", "quantile of no values")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    xs = sorted(values)
    pos = q * (len(xs) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(xs) - 1)
    frac = pos - lo
    if frac == 0:
        return float(xs[lo])
    return xs[lo] + (xs[hi] - xs[lo]) * frac


def median(values: Sequence[float]) -> float:
    return quantile(values, 0.5)


def p95(values: Sequence[float]) -> float:
    return quantile(values, 0.95)


def ecdf(values: Sequence[float]) -> list[tuple[float, float]]:
    """Sorted ``(value, i/n)`` pairs; ties are kept as separate steps."""
    if not values:
        raise StatsError("empty-input", "ECDF of no values")
    xs = sorted(values)
    n = len(xs)
    out = [(x, (i + 1) / n) for i, x in enumerate(xs)]
    out[-1] = (out[-1][0], 1.0)
    return out


def normalize(group: Mapping[str, Sequence[float]]) -> dict[str, list[float]]:
    """Divides every value by the largest value across all series."""
    top = max((v for vs in group.values() for v in vs), default=0.0)
    if not top > 0:
        raise StatsError("all-zero", "normalization needs at least one positive value")
    return {label: [1.0 if v == top else v / top for v in vs] for label, vs in group.items()}
