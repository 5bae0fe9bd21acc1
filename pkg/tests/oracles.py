"""Independent reference computations used to cross-check the package.

Nothing here imports the code under test; each oracle solves its problem
by brute force (grids, bisection, cofactor expansion).
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def grid_argmax(objective, lo: float, hi: float, n: int) -> tuple[float, float]:
    """Best point of ``objective`` on an ``n``-point uniform grid and the grid step."""
    grid = np.linspace(lo, hi, n)
    values = objective(grid)
    return float(grid[int(np.argmax(values))]), (hi - lo) / (n - 1)


def bisect_root(f, lo: float, hi: float, tol: float = 1e-15, max_iter: int = 500) -> float:
    """Root of an increasing function on ``[lo, hi]`` (sign change assumed)."""
    flo = f(lo)
    if flo >= 0:
        return lo
    if f(hi) <= 0:
        return hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


def symmetric_fixed_point(level: float, cross: float, direct: float, sigma2: float, p_max: float) -> float:
    """Solve ``p = clamp(level - (cross*p + sigma2)/direct, 0, p_max)`` by bisection."""
    def gap(p):
        return p - min(max(level - (cross * p + sigma2) / direct, 0.0), p_max)
    return bisect_root(gap, 0.0, p_max)


def laplace_det(rows) -> Fraction:
    """Exact determinant by cofactor expansion over rationals."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    total = Fraction(0)
    for j in range(n):
        if rows[0][j] == 0:
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        total += (-1) ** j * rows[0][j] * laplace_det(minor)
    return total


def p_matrix_by_enumeration(matrix) -> bool:
    """Exact P-matrix test: every principal minor, computed in rational arithmetic, is positive."""
    a = [[Fraction(float(x)) for x in row] for row in np.asarray(matrix)]
    n = len(a)
    for k in range(1, n + 1):
        for idx in itertools.combinations(range(n), k):
            sub = [[a[i][j] for j in idx] for i in idx]
            if laplace_det(sub) <= 0:
                return False
    return True


def ideal_utility_by_grid(alpha, lam, bandwidth, direct, sigma2, p_max, slots, rate, n=10_000):
    """Per-epoch log utility of the interference-free optimum, each BS solved on a power grid."""
    total = 0.0
    for a, l, h, pm in zip(alpha, lam, direct, p_max):
        snr = h / sigma2
        p, _ = grid_argmax(lambda q: a * bandwidth * np.log1p(snr * q) - l * q, 0.0, pm, n)
        total += math.log(slots * rate * math.log1p(snr * p))
    return total
