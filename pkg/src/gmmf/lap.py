"""Rectangular linear assignment (maximization) and the top-m column reduction.

For an ``m x n`` score matrix with ``m <= n`` each row can only ever be
assigned one of its ``m`` largest entries: the other ``m - 1`` rows occupy
at most ``m - 1`` of those columns, so at least one stays free and moving
the row there never lowers the total. Keeping only the union of every row's
top-``m`` columns therefore leaves the optimal value unchanged while the
problem shrinks to at most ``m x m**2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import DimensionError


@dataclass(frozen=True)
class LapSolution:
    assignment: np.ndarray
    value: float


@dataclass(frozen=True)
class ReducedCost:
    """Columns of a score matrix that survive the top-``m`` filter.

    Attributes
    ----------
    entries : ndarray, shape (m, c)
        The original scores restricted to ``colmap``.
    colmap : ndarray, shape (c,)
        Sorted original column indices.
    allowed : ndarray of bool, shape (m, c)
        ``allowed[i, j]`` marks the columns among row ``i``'s ``m`` largest.
    """

    entries: np.ndarray
    colmap: np.ndarray
    allowed: np.ndarray


def _check_cost(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise DimensionError(f"cost matrix must be 2-D, got shape {C.shape}")
    m, n = C.shape
    if m > n:
        raise DimensionError(f"cost matrix has more rows ({m}) than columns ({n})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    return C


def _solution(C: np.ndarray, sigma: np.ndarray) -> LapSolution:
    sigma = np.asarray(sigma, dtype=np.intp)
    return LapSolution(sigma, float(C[np.arange(len(sigma)), sigma].sum()))


def lap_max(C) -> LapSolution:
    """Exact maximum-weight injection of rows into columns."""
    C = _check_cost(C)
    if C.shape[0] == 0:
        return LapSolution(np.zeros(0, dtype=np.intp), 0.0)
    rows, cols = linear_sum_assignment(C, maximize=True)
    sigma = np.empty(C.shape[0], dtype=np.intp)
    sigma[rows] = cols
    return _solution(C, sigma)


def topm_mask(C, k: int | None = None) -> np.ndarray:
    """Boolean mask of each row's ``k`` largest entries (default ``k = m``).

    Ties at the threshold keep the lowest column indices, so the mask is a
    deterministic function of ``C``. Costs ``O(mn)``.
    """
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    k = m if k is None else k
    if k >= n:
        return np.ones((m, n), dtype=bool)
    if k <= 0:
        return np.zeros((m, n), dtype=bool)
    thr = -np.partition(-C, k - 1, axis=1)[:, k - 1]
    greater = C > thr[:, None]
    equal = C == thr[:, None]
    need = k - greater.sum(axis=1)
    return greater | (equal & (np.cumsum(equal, axis=1) <= need[:, None]))


def reduce_topm(C) -> ReducedCost:
    C = _check_cost(C)
    m, n = C.shape
    if m == n:
        return ReducedCost(C.copy(), np.arange(n), np.ones((m, n), dtype=bool))
    keep = topm_mask(C)
    colmap = np.flatnonzero(keep.any(axis=0))
    return ReducedCost(C[:, colmap], colmap, keep[:, colmap])


def lap_max_reduced(C) -> LapSolution:
    """Same optimum as :func:`lap_max`, solved on the top-``m`` columns only."""
    C = _check_cost(C)
    if C.shape[0] == 0:
        return LapSolution(np.zeros(0, dtype=np.intp), 0.0)
    red = reduce_topm(C)
    sub = lap_max(red.entries)
    return _solution(C, red.colmap[sub.assignment])
