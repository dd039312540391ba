"""Single-period allocation: M blocks sharing the energy ``M * q1``.

The optimum is either uniform (when ``q1 >= p_a``) or an on-off profile:
silence, at most one block below ``p_b``, then ``k0`` equal blocks near
``p_a``.  Only the power of the odd block needs a one-dimensional search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError
from .fading import OutageCurve, Thresholds, thresholds as curve_thresholds

__all__ = [
    "N1Solution",
    "f_k_objective",
    "solve_p3",
    "suboptimal_onoff_n1",
    "search_low_power",
]

# grid step of the exhaustive scan, as a fraction of p_b
GRID_FRACTION = 1e-4


@dataclass(frozen=True)
class N1Solution:
    profile: np.ndarray
    k0: int
    p_hat0: float
    objective: float


def f_k_objective(curve: OutageCurve, total_energy: float, k: int, p: float) -> float:
    """Mean outage of one block at ``p`` plus ``k`` blocks sharing the rest."""
    if k < 1:
        raise DomainError("k must be a positive integer")
    if not 0.0 <= p <= total_energy / (k + 1) * (1 + 1e-12):
        raise DomainError(f"p={p} outside [0, total/(k+1)]")
    return float((curve(p) + k * curve((total_energy - p) / k)) / (k + 1))


def search_low_power(objective, upper: float, singleton: float | None,
                     grid_step: float) -> tuple[float, float]:
    """Minimise a scalar objective over ``[0, upper)`` plus one extra point.

    The interval is scanned exhaustively at ``grid_step`` and the best grid
    point is polished with one bounded golden-section pass.  Ties go to the
    smallest power.
    """
    best_p, best_v = math.nan, math.inf
    if upper > 0:
        n = max(int(math.ceil(upper / grid_step)), 1)
        grid = grid_step * np.arange(n)
        grid = grid[grid < upper]
        values = np.asarray(objective(grid), dtype=float)
        k = int(np.argmin(values))
        best_p, best_v = float(grid[k]), float(values[k])
        lo = max(0.0, best_p - grid_step)
        hi = min(best_p + grid_step, upper * (1 - 1e-12))
        if hi > lo:
            res = minimize_scalar(lambda x: float(objective(x)), bounds=(lo, hi),
                                  method="bounded", options={"xatol": grid_step * 1e-3})
            if res.success and res.fun < best_v - 1e-15:
                best_p, best_v = float(res.x), float(res.fun)
    if singleton is not None:
        v = float(objective(singleton))
        if v < best_v - 1e-15 or (v <= best_v and singleton < best_p) or math.isnan(best_p):
            best_p, best_v = float(singleton), v
    return best_p, best_v


def _check(q1, m):
    if q1 < 0:
        raise DomainError("q1 must be nonnegative")
    if int(m) != m or m < 1:
        raise DomainError("m must be a positive integer")


def _mean_outage(curve, profile):
    return float(np.mean(curve(profile)))


def solve_p3(curve: OutageCurve, q1: float, m: int, grid_step: float | None = None,
             thr: Thresholds | None = None) -> N1Solution:
    """Outage-optimal split of ``m * q1`` over ``m`` blocks (non-decreasing)."""
    _check(q1, m)
    m = int(m)
    thr = thr or curve_thresholds(curve)
    if q1 == 0:
        return N1Solution(np.zeros(m), 0, 0.0, 1.0)
    if q1 >= thr.p_a:
        profile = np.full(m, float(q1))
        return N1Solution(profile, m, 0.0, _mean_outage(curve, profile))

    total = m * q1
    k0 = int(math.floor(q1 / thr.p_a * m))
    profile = np.zeros(m)
    if k0 == 0:
        profile[-1] = total
        return N1Solution(profile, 0, total, _mean_outage(curve, profile))

    step = grid_step or thr.p_b * GRID_FRACTION
    share = total / (k0 + 1)

    def objective(p):
        return curve(p) + k0 * curve((total - p) / k0)

    # beyond total/(k0+1) the odd block would outgrow the others
    p_hat0, _ = search_low_power(objective, min(thr.p_b, share), share, step)
    profile[m - k0 - 1] = p_hat0
    profile[m - k0:] = (total - p_hat0) / k0
    return N1Solution(profile, k0, p_hat0, _mean_outage(curve, profile))


def suboptimal_onoff_n1(curve: OutageCurve, q1: float, m: int,
                        thr: Thresholds | None = None) -> N1Solution:
    """Two-level on-off split: ``k0`` equal "on" blocks at the end."""
    _check(q1, m)
    m = int(m)
    thr = thr or curve_thresholds(curve)
    if q1 == 0:
        return N1Solution(np.zeros(m), 0, 0.0, 1.0)
    if q1 >= thr.p_a:
        profile = np.full(m, float(q1))
        return N1Solution(profile, m, 0.0, _mean_outage(curve, profile))
    total = m * q1
    k0 = int(math.floor(q1 / thr.p_a * m))
    profile = np.zeros(m)
    if k0 == 0:
        profile[-1] = total
    else:
        profile[m - k0:] = total / k0
    return N1Solution(profile, k0, 0.0, _mean_outage(curve, profile))
