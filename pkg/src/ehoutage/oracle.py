"""Brute-force minimisers over gridded power profiles.

Nothing here knows about ``p_a`` or ``p_b``.  Every allocation whose powers
lie on the grid (the last block takes the rounding residue) is covered.
The default ``"dp"`` method visits the same set as plain enumeration but
shares partial sums between tuples, which is what makes grid 1e-3 usable.
``"enumerate"`` walks the tuples one by one and is kept to cross-check the
shared-sum route on small instances.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ResourceError
from .fading import OutageCurve
from .offline import EhTrace

__all__ = ["OracleResult", "brute_force_p3", "brute_force_p1", "WORK_CAP"]

WORK_CAP = 10**8
_CHUNK = 256


@dataclass(frozen=True)
class OracleResult:
    profile: np.ndarray
    objective: float


def _units(total, step):
    return int(math.floor(total / step + 1e-9))


def _min_plus(cost_pick, prev, limit_fraction=None):
    """``out[s] = min_u cost_pick[u] + prev[s - u]`` with its argmin.

    With ``limit_fraction = k`` only ``u <= s / k`` is scanned: ``u`` is then
    the smallest of ``k`` unordered parts, which loses nothing.
    """
    n = prev.size
    out = np.empty(n)
    arg = np.empty(n, dtype=np.int64)
    padded = np.concatenate([np.full(n, np.inf), prev])
    for s0 in range(0, n, _CHUNK):
        s = np.arange(s0, min(s0 + _CHUNK, n))
        width = s[-1] + 1 if limit_fraction is None else s[-1] // limit_fraction + 1
        u = np.arange(width)
        vals = cost_pick[u][None, :] + padded[n + s[:, None] - u[None, :]]
        if limit_fraction is not None:
            vals = np.where(u[None, :] <= s[:, None] // limit_fraction, vals, np.inf)
        k = np.argmin(vals, axis=1)
        arg[s] = k
        out[s] = vals[np.arange(s.size), k]
    return out, arg


def brute_force_p3(curve: OutageCurve, q1: float, m: int, grid_step: float,
                   work_cap: int = WORK_CAP, method: str = "dp") -> OracleResult:
    """Best gridded split of ``m * q1`` over ``m`` blocks, sorted ascending."""
    if q1 < 0 or m < 1 or int(m) != m:
        raise DomainError("need q1 >= 0 and a positive integer m")
    if m > 6:
        raise DomainError("brute_force_p3 is limited to m <= 6")
    m = int(m)
    total = m * q1
    if total == 0:
        return OracleResult(np.zeros(m), 1.0)
    s_max = _units(total, grid_step)
    grid_f = np.asarray(curve(grid_step * np.arange(s_max + 1)), dtype=float)

    if method == "enumerate":
        count = math.comb(s_max + m - 1, m - 1)
        if count > work_cap:
            raise ResourceError(f"{count} tuples exceed the work cap {work_cap}")
        best, best_v = None, math.inf
        for units in itertools.combinations_with_replacement(range(s_max + 1), m - 1):
            used = sum(units)
            if used > s_max:
                continue
            v = grid_f[list(units)].sum() + curve(total - grid_step * used)
            if v < best_v:
                best, best_v = units, v
        profile = np.append(grid_step * np.asarray(best, dtype=float),
                            total - grid_step * sum(best))
        return OracleResult(np.sort(np.maximum(profile, 0.0)), float(best_v / m))
    if method != "dp":
        raise DomainError(f"unknown method {method!r}")

    work = sum((s_max + 1) * (s_max + 2) // (2 * k) for k in range(2, m)) + s_max + 1
    if work > work_cap:
        raise ResourceError(f"{work} evaluations exceed the work cap {work_cap}")
    # table[k-1][s]: best cost of k gridded blocks using exactly s units
    tables, args = [grid_f], []
    for k in range(2, m):
        val, arg = _min_plus(grid_f, tables[-1], limit_fraction=k)
        tables.append(val)
        args.append(arg)
    used = np.arange(s_max + 1)
    last = np.asarray(curve(np.maximum(total - grid_step * used, 0.0)))
    if m == 1:
        return OracleResult(np.array([total]), float(curve(total)))
    scores = tables[-1] + last
    s = int(np.argmin(scores))
    best_v = float(scores[s])
    parts = []
    for k in range(m - 1, 1, -1):
        u = int(args[k - 2][s])
        parts.append(u)
        s -= u
    parts.append(s)
    profile = np.append(grid_step * np.asarray(parts, dtype=float),
                        total - grid_step * sum(parts))
    # a residue of -1e-16 is rounding, not a negative power
    return OracleResult(np.sort(np.maximum(profile, 0.0)), best_v / m)


def brute_force_p1(curve: OutageCurve, trace: EhTrace, grid_step: float,
                   work_cap: int = WORK_CAP) -> OracleResult:
    """Best gridded profile meeting every prefix energy constraint.

    The optimum is returned sorted ascending; ascending order minimises every
    prefix sum of a fixed multiset, so sorting never breaks feasibility.
    """
    n, m = trace.n, trace.m
    blocks = n * m
    if blocks > 9:
        raise DomainError("brute_force_p1 is limited to N*M <= 9")
    harvest = trace.cumulative_harvest()
    total = float(harvest[-1])
    if total == 0:
        return OracleResult(np.zeros((n, m)), 1.0)
    s_max = _units(total, grid_step)
    work = (blocks - 1) * (s_max + 1) * (s_max + 2) // 2
    if work > work_cap:
        raise ResourceError(f"{work} evaluations exceed the work cap {work_cap}")
    grid_f = np.asarray(curve(grid_step * np.arange(s_max + 1)), dtype=float)
    caps = [min(_units(h, grid_step), s_max) for h in harvest]

    value = np.full(s_max + 1, np.inf)
    value[: caps[0] + 1] = grid_f[: caps[0] + 1]
    args = []
    for b in range(1, blocks - 1):
        val, arg = _min_plus(grid_f, value)
        val[caps[b] + 1:] = np.inf
        value = val
        args.append(arg)
    if blocks == 1:
        return OracleResult(np.array([[total]]), float(curve(total)))
    used = np.arange(s_max + 1)
    scores = value + np.asarray(curve(np.maximum(total - grid_step * used, 0.0)))
    s = int(np.argmin(scores))
    best_v = float(scores[s])
    powers = [total - grid_step * s]
    for arg in reversed(args):
        u = int(arg[s])
        powers.append(grid_step * u)
        s -= u
    powers.append(grid_step * s)
    profile = np.sort(np.maximum(np.asarray(powers[::-1]), 0.0))
    return OracleResult(profile.reshape(n, m), best_v / blocks)
