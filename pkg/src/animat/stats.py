"""Rank-based comparison of condition performance (Mann-Whitney U)."""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .errors import ValidationError


def _rank_sum_u(a: np.ndarray, b: np.ndarray) -> float:
    """U statistic of the first sample, using midranks for ties."""
    pooled = np.concatenate([a, b])
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(pooled.size)
    sorted_vals = pooled[order]
    i = 0
    rank = 1.0
    while i < pooled.size:
        j = i
        while j + 1 < pooled.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (rank + rank + (j - i)) / 2.0
        rank += j - i + 1
        i = j + 1
    r_a = ranks[:a.size].sum()
    return r_a - a.size * (a.size + 1) / 2.0


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Returns ``(U, p)`` where U belongs to the first sample and p uses the
    normal approximation with continuity correction and tie-corrected
    variance.  Identical constant samples give p = 1.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both samples must be non-empty")
    n1, n2 = a.size, b.size
    n = n1 + n2
    u = _rank_sum_u(a, b)
    mu = n1 * n2 / 2.0

    _, tie_counts = np.unique(np.concatenate([a, b]), return_counts=True)
    tie_term = (tie_counts.astype(float) ** 3 - tie_counts).sum()
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var <= 0:
        return u, 1.0
    # continuity correction pulls U half a unit toward the mean
    z = (u - mu - math.copysign(0.5, u - mu)) / math.sqrt(var) if u != mu else 0.0
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return u, min(p, 1.0)


def mann_whitney_u_exact(a, b) -> tuple[float, float]:
    """Exact two-sided p by enumerating all group assignments of the pooled data.

    Intended for small samples (the enumeration is combinatorial in
    ``n1 + n2``); serves as the reference oracle for the approximate test.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValidationError("both samples must be non-empty")
    pooled = np.concatenate([a, b])
    n1 = a.size
    u_obs = _rank_sum_u(a, b)
    us = []
    idx_all = frozenset(range(pooled.size))
    for comb in combinations(range(pooled.size), n1):
        rest = sorted(idx_all - set(comb))
        us.append(_rank_sum_u(pooled[list(comb)], pooled[rest]))
    us = np.asarray(us)
    eps = 1e-12
    p_low = np.mean(us <= u_obs + eps)
    p_high = np.mean(us >= u_obs - eps)
    return u_obs, float(min(1.0, 2.0 * min(p_low, p_high)))
