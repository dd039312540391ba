"""Offline (non-causal) allocation over N harvesting periods of M blocks.

Profiles are ``(N, M)`` arrays; flattening them row-major gives block order.
Period indices in the public API are 1-based, matching the usual ``(i, j)``
block notation.

The optimal solver walks the horizon forward in "power-exhausting" segments:
the stretch from period ``i`` whose average harvest is smallest ends where
all harvested energy can be spent.  A segment rich enough (average at least
``p_a``) is spent at its average rate.  The first poor stretch is handled by
the single-period on-off solution on an enlarged region: silence, one block
below ``p_b`` at a fixed onset, then the taut string of the remaining
harvest (one equal run when the constraints allow it, otherwise a run that
steps up at exhausting points), grown one segment at a time while that
lowers the outage.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fading import OutageCurve, Thresholds, thresholds as curve_thresholds
from .n1 import GRID_FRACTION, search_low_power

__all__ = [
    "EhTrace",
    "SegmentPlan",
    "ValidationReport",
    "next_exhaust",
    "plan_p1_optimal",
    "solve_p1_optimal",
    "solve_p1_suboptimal",
    "first_period_powers",
    "greedy_profile",
    "average_outage",
    "validate_profile",
]

TIE_TOL = 1e-12
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class EhTrace:
    """Per-period harvest rates ``Q_1..Q_N`` with ``m`` blocks per period."""

    rates: tuple[float, ...]
    m: int

    def __post_init__(self):
        rates = tuple(float(q) for q in np.ravel(self.rates))
        if not rates:
            raise DomainError("trace needs at least one period")
        if any(not q >= 0 for q in rates):
            raise DomainError("harvest rates must be nonnegative")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError("m must be a positive integer")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "m", int(self.m))

    @property
    def n(self) -> int:
        return len(self.rates)

    def cumulative_harvest(self) -> np.ndarray:
        """Energy harvested by the end of each block, in block order."""
        per_block = np.repeat(np.asarray(self.rates), self.m)
        return np.cumsum(per_block)


@dataclass(frozen=True)
class SegmentPlan:
    """How one stretch of periods ``i_start..i_end`` (1-based) is spent.

    ``onset`` is the 1-based ``(period, block)`` of the odd block carrying
    ``p0``; it is ``None`` for a segment spent at a constant rate.
    """

    i_start: int
    i_end: int
    p_hat: float
    k0: int = 0
    onset: tuple[int, int] | None = None
    p0: float = 0.0
    p1: float = 0.0


@dataclass
class ValidationReport:
    feasible: bool
    terminal_ok: bool
    terminal_gap: float
    violations: list = field(default_factory=list)  # (i, j, excess), 1-based
    decreases: list = field(default_factory=list)  # (i, j) of a drop, 1-based

    @property
    def clean(self) -> bool:
        return self.feasible and self.terminal_ok and not self.decreases


def average_outage(curve: OutageCurve, profile) -> float:
    return float(np.mean(curve(np.asarray(profile, dtype=float))))


def _exhaust(rates, i, carry=0.0):
    """0-based ``(i_s, average)`` of the minimum-average stretch from ``i``."""
    sums = carry + np.cumsum(rates[i:])
    avgs = sums / np.arange(1, sums.size + 1)
    low = avgs.min()
    k = int(np.nonzero(avgs <= low + TIE_TOL * max(1.0, abs(low)))[0][0])
    return i + k, float(avgs[k])


def next_exhaust(trace: EhTrace, i: int, q0: float = 0.0) -> tuple[int, float]:
    """Next power-exhausting period from period ``i`` (1-based).

    ``q0`` is energy carried in from silent earlier periods; it is spread
    per block, i.e. divided by ``M``, before averaging.  Returns the 1-based
    period ``i_s`` and the constant power ``p_hat`` that spends everything
    harvested up to its end.
    """
    if not 1 <= i <= trace.n:
        raise DomainError(f"period {i} outside 1..{trace.n}")
    if q0 < 0:
        raise DomainError("carry-in energy must be nonnegative")
    i_s, avg = _exhaust(np.asarray(trace.rates), i - 1, q0 / trace.m)
    return i_s + 1, avg


def _segments(rates, start):
    segs = []
    i = start
    while i < rates.size:
        i_s, avg = _exhaust(rates, i)
        segs.append((i, i_s, avg))
        i = i_s + 1
    return segs


def _hull_powers(avail, start, level):
    """Taut-string powers for blocks ``start+1..`` from used energy ``level``.

    ``avail[b]`` is the energy harvested by block ``b``; the string ends
    tight at the last block.
    """
    n = avail.size
    out = np.empty(n - start - 1)
    cur = start
    while cur < n - 1:
        idx = np.arange(cur + 1, n)
        slopes = (avail[cur + 1:] - level) / (idx - cur)
        low = slopes.min()
        e = cur + 1 + int(np.nonzero(slopes <= low + TIE_TOL * max(1.0, abs(low)))[0][-1])
        out[cur - start:e - start] = low
        level += low * (e - cur)
        cur = e
    return out


class _CaseTwo:
    """Search state for the first stretch whose average is below ``p_a``.

    Block indices are global and 0-based; energies are measured from the
    start of the stretch.
    """

    def __init__(self, curve, thr, trace, harvest, segs, step):
        self.curve = curve
        self.thr = thr
        self.m = trace.m
        self.segs = segs
        self.step = step
        self.first_block = segs[0][0] * self.m
        base = harvest[self.first_block - 1] if self.first_block else 0.0
        self.avail = harvest - base

    def last_block(self, t):
        return (self.segs[t][1] + 1) * self.m - 1

    def energy(self, t):
        return self.avail[self.last_block(t)]

    def place_onset(self, t):
        # the single-period rule: k0 blocks near p_a close the region
        blocks = self.last_block(t) - self.first_block + 1
        k0 = min(int(math.floor(self.energy(t) / self.thr.p_a)), blocks - 1)
        self.onset = self.last_block(t) - k0

    def evaluate(self, t):
        """Best split of the region ending with segment ``t`` at the fixed onset.

        Returns ``(powers, cost)`` where ``powers`` covers the onset block
        through the region end.  The odd onset power ``x`` is searched over
        ``[0, p_b)`` plus the single point where it joins the run.  The run
        after it is the constant ``(E - x) / k0`` whenever that respects the
        harvest; otherwise it bends at the blocks where the constraint binds.
        """
        curve, b0 = self.curve, self.onset
        last = self.last_block(t)
        total = self.energy(t)
        k0 = last - b0
        if k0 == 0:
            return np.array([total]), float(curve(total))
        avail = self.avail[b0:last + 1]
        span = np.arange(1, k0 + 1)
        # largest x that still lets the constant run fit under the harvest
        r = np.arange(k0) / k0
        x_flat = float(((avail[:-1] - r * total) / (1.0 - r)).min())
        # largest x not exceeding the power that follows it
        join = float((avail / np.arange(1, k0 + 2)).min())

        if x_flat >= join - TIE_TOL * max(1.0, join):
            def cost(p):
                return curve(p) + k0 * curve((total - p) / k0)
        else:
            tails = np.array([float(np.sum(curve(_hull_powers(avail, e, avail[e]))))
                              if e < k0 else 0.0 for e in range(k0 + 1)])

            def cost(p):
                p = np.asarray(p, dtype=float)
                slopes = (avail[None, 1:] - p.reshape(-1, 1)) / span[None, :]
                e = np.argmin(slopes, axis=1)
                s = slopes[np.arange(e.size), e]
                out = curve(p.ravel()) + (e + 1) * curve(s) + tails[e + 1]
                return out.reshape(p.shape) if p.ndim else float(out[0])

        x, value = search_low_power(cost, min(self.thr.p_b, join), join, self.step)
        powers = np.concatenate([[x], _hull_powers(avail, 0, x)])
        return powers, value

    def seg_cost(self, t):
        i, i_s, avg = self.segs[t]
        return (i_s - i + 1) * self.m * float(self.curve(avg))

    def start(self):
        """Region end ``t0``: the last poor segment, whose onset then stays fixed."""
        low = [t for t, s in enumerate(self.segs) if s[2] < self.thr.p_a]
        t = low[-1] if len(low) < len(self.segs) else len(self.segs) - 1
        self.place_onset(t)
        return t

    def run(self):
        segs = self.segs
        last_seg = len(segs) - 1
        t = self.start()
        powers, value = self.evaluate(t)
        while t < last_seg and (powers.size == 1 or powers[-1] > segs[t + 1][2] + TIE_TOL):
            t += 1
            powers, value = self.evaluate(t)

        temp, best = t, (powers, value)
        while t < last_seg:
            x, p1 = powers[0], powers[-1]
            tail = int(np.count_nonzero(np.abs(powers[1:] - p1) <= TIE_TOL * max(1.0, p1)))
            if not x > tail * (segs[t + 1][2] - p1) + TIE_TOL:
                break
            t += 1
            powers, value = self.evaluate(t)
            prev_last = self.last_block(t - 1)
            used = float(np.sum(powers[:prev_last - self.onset + 1]))
            feasible = used <= self.avail[prev_last] + FEAS_TOL * max(1.0, used)
            kept = best[1] + sum(self.seg_cost(r) for r in range(temp + 1, t + 1))
            if feasible and kept > value:
                temp, best = t, (powers, value)
            else:
                break
        return temp, best


def plan_p1_optimal(curve: OutageCurve, trace: EhTrace, grid_step: float | None = None,
                    thr: Thresholds | None = None) -> tuple[np.ndarray, list[SegmentPlan]]:
    """Optimal non-decreasing profile together with its segment plans."""
    thr = thr or curve_thresholds(curve)
    step = grid_step or max(thr.p_b, 1e-12) * GRID_FRACTION
    rates = np.asarray(trace.rates)
    m = trace.m
    harvest = trace.cumulative_harvest()
    flat = np.zeros(trace.n * m)
    plans = []
    i = 0
    while i < trace.n:
        segs = _segments(rates, i)
        start, end, avg = segs[0]
        if avg >= thr.p_a:
            flat[start * m:(end + 1) * m] = avg
            plans.append(SegmentPlan(start + 1, end + 1, avg))
            i = end + 1
            continue
        case = _CaseTwo(curve, thr, trace, harvest, segs, step)
        t, (powers, _) = case.run()
        b0 = case.onset
        last = case.last_block(t)
        flat[b0:last + 1] = powers
        k0 = last - b0
        plans.append(SegmentPlan(start + 1, segs[t][1] + 1, avg, k0,
                                 (b0 // m + 1, b0 % m + 1), float(powers[0]), float(powers[-1])))
        i = segs[t][1] + 1
    return flat.reshape(trace.n, m), plans


def solve_p1_optimal(curve: OutageCurve, trace: EhTrace, grid_step: float | None = None,
                     thr: Thresholds | None = None) -> np.ndarray:
    """Outage-optimal offline profile, shape ``(N, M)``."""
    return plan_p1_optimal(curve, trace, grid_step, thr)[0]


def first_period_powers(curve: OutageCurve, trace: EhTrace, grid_step: float | None = None,
                        thr: Thresholds | None = None) -> np.ndarray:
    """Row 1 of :func:`solve_p1_optimal`, skipping searches that cannot touch it.

    The onset of a poor first stretch is fixed before any search, so when
    it falls after period 1 that period is silent.
    """
    thr = thr or curve_thresholds(curve)
    m = trace.m
    segs = _segments(np.asarray(trace.rates), 0)
    if segs[0][2] >= thr.p_a:
        return np.full(m, segs[0][2])
    step = grid_step or max(thr.p_b, 1e-12) * GRID_FRACTION
    case = _CaseTwo(curve, thr, trace, trace.cumulative_harvest(), segs, step)
    case.start()
    if case.onset >= m:
        return np.zeros(m)
    return plan_p1_optimal(curve, trace, grid_step, thr)[0][0]


def solve_p1_suboptimal(curve: OutageCurve, trace: EhTrace,
                        thr: Thresholds | None = None) -> np.ndarray:
    """On-off profile without the one-dimensional searches.

    Each poor segment stays silent and then spends its energy on the
    ``k0 = floor(E / p_a)`` blocks that close it.
    """
    thr = thr or curve_thresholds(curve)
    m = trace.m
    flat = np.zeros(trace.n * m)
    for start, end, avg in _segments(np.asarray(trace.rates), 0):
        lo, hi = start * m, (end + 1) * m
        if avg >= thr.p_a:
            flat[lo:hi] = avg
            continue
        energy = (hi - lo) * avg
        k0 = int(math.floor(energy / thr.p_a))
        if k0 == 0:
            flat[hi - 1] = energy
        else:
            flat[hi - k0:hi] = energy / k0
    return flat.reshape(trace.n, m)


def greedy_profile(trace: EhTrace) -> np.ndarray:
    """Spend each period's harvest uniformly within the period."""
    return np.repeat(np.asarray(trace.rates)[:, None], trace.m, axis=1)


def validate_profile(profile, trace: EhTrace, tol: float = FEAS_TOL) -> ValidationReport:
    """Check the prefix energy constraints, terminal equality and monotonicity."""
    p = np.asarray(profile, dtype=float)
    if p.shape != (trace.n, trace.m):
        raise DomainError(f"profile shape {p.shape} does not match trace ({trace.n}, {trace.m})")
    harvest = trace.cumulative_harvest()
    scale = tol * max(1.0, float(harvest[-1]))
    used = np.cumsum(p.ravel())
    excess = used - harvest
    m = trace.m
    violations = [(b // m + 1, b % m + 1, float(excess[b]))
                  for b in np.nonzero(excess > scale)[0]]
    flat = p.ravel()
    drops = np.nonzero(np.diff(flat) < -scale)[0] + 1
    gap = float(harvest[-1] - used[-1])
    return ValidationReport(
        feasible=not violations and bool(np.all(flat >= -scale)),
        terminal_ok=abs(gap) <= scale,
        terminal_gap=gap,
        violations=violations,
        decreases=[(b // m + 1, b % m + 1) for b in drops],
    )
