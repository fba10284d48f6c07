"""Rank statistics: average-tie ranks, Spearman correlation, linear percentile, bootstrap."""
from __future__ import annotations

import math

import numpy as np

from .errors import DataError


def rank_average_ties(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of the positions they occupy.

    >>> rank_average_ties([5, 5, 9]).tolist()
    [1.5, 1.5, 3.0]
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise DataError("ranking needs a 1-d vector of length >= 2")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite value in rank input")
    order = np.argsort(x, kind="stable")
    sorted_x = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    start = 0
    n = len(x)
    while start < n:
        stop = start + 1
        while stop < n and sorted_x[stop] == sorted_x[start]:
            stop += 1
        # positions start..stop-1 are 1-based ranks start+1..stop
        ranks[order[start:stop]] = (start + 1 + stop) / 2.0
        start = stop
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of the average-tie ranks of ``x`` and ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DataError("spearman needs equal-length vectors")
    rx, ry = rank_average_ties(x), rank_average_ties(y)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("undefined correlation: constant vector")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def percentile_linear(values, p: float) -> float:
    """Percentile with linear interpolation between closest ranks (position ``p/100 * (n-1)``)."""
    if not 0 <= p <= 100:
        raise DataError(f"percentile {p} outside [0, 100]")
    v = sorted(float(a) for a in values)
    if not v:
        raise DataError("percentile of empty list")
    h = (p / 100.0) * (len(v) - 1)
    lo, hi = math.floor(h), math.ceil(h)
    if lo == hi:
        return v[lo]
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def bootstrap_indices(n_units: int, n_boot: int, seed) -> np.ndarray:
    """``(n_boot, n_units)`` resampling indices drawn with replacement."""
    if n_units < 1:
        raise DataError("bootstrap needs at least one unit")
    if n_boot < 2:
        raise DataError("bootstrap needs n_boot >= 2")
    rng = np.random.default_rng(seed)
    return rng.integers(0, n_units, size=(n_boot, n_units))


def bootstrap_std_ci(per_unit_values, n_boot: int = 100, seed=0) -> tuple[float, float]:
    """Return ``(mean, std)``: the plain mean and the std of ``n_boot`` resampled means."""
    values = np.asarray(per_unit_values, dtype=np.float64)
    idx = bootstrap_indices(len(values), n_boot, seed)
    means = values[idx].mean(axis=1)
    return float(values.mean()), float(means.std(ddof=1))
