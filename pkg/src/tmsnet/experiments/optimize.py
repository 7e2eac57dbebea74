"""Coarse grid scan followed by golden-section refinement of a scalar objective."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar


@dataclass(frozen=True)
class OptimumResult:
    x: float
    value: float
    bracket: tuple
    tol: float
    multimodal: bool
    at_boundary: bool
    n_evals: int


def local_maxima(values, rtol: float = 1e-9) -> list[int]:
    """Indices of interior strict local maxima (plateaus count once)."""
    v = np.asarray(values, dtype=float)
    scale = rtol * max(1.0, np.nanmax(np.abs(v)))
    peaks = []
    i = 1
    while i < v.size - 1:
        j = i
        while j + 1 < v.size and abs(v[j + 1] - v[i]) <= scale:
            j += 1
        if j < v.size - 1 and v[i] > v[i - 1] + scale and v[i] > v[j + 1] + scale:
            peaks.append(i)
        i = j + 1
    return peaks


def maximize(f, grid, tol: float = 1e-3) -> OptimumResult:
    """Maximize ``f`` over ``[grid[0], grid[-1]]``.

    The grid is scanned first.  A single interior peak is refined by scipy's
    golden-section search inside the neighbouring grid points until the
    bracket is narrower than ``tol``.  Several peaks set ``multimodal`` and
    return the best grid point; a maximum on the edge of the grid is returned
    unrefined with ``at_boundary``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 3:
        raise ValueError("need at least three grid points")
    vals = np.array([f(x) for x in grid], dtype=float)
    n = grid.size
    if not np.any(np.isfinite(vals)):
        raise ArithmeticError("objective is not finite anywhere on the grid")
    best = int(np.nanargmax(vals))
    peaks = local_maxima(np.nan_to_num(vals, nan=-np.inf))
    if len(peaks) > 1:
        lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, n - 1)]
        return OptimumResult(grid[best], vals[best], (lo, hi), hi - lo, True, False, n)
    if best in (0, n - 1):
        lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, n - 1)]
        return OptimumResult(grid[best], vals[best], (lo, hi), hi - lo, False, True, n)
    a, b, c = grid[best - 1], grid[best], grid[best + 1]
    # scipy's xtol is relative to |x|; convert the absolute tolerance
    xtol = tol / (2.0 * max(abs(b), tol))
    res = minimize_scalar(lambda x: -f(x), bracket=(a, b, c), method="golden",
                          options={"xtol": xtol})
    x, val = float(res.x), float(-res.fun)
    if val < vals[best]:
        x, val = float(b), float(vals[best])
    achieved = 2.0 * xtol * abs(x)
    return OptimumResult(x, val, (float(a), float(c)), min(achieved, tol) if math.isfinite(achieved) else tol,
                         False, False, n + int(res.nfev))
