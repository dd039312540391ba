"""Causal allocation: the harvest of future periods is only known in law.

The EH rate follows a finite-state Markov chain.  The exact solver is a
finite-horizon dynamic program over a uniform battery grid: in period ``i``
with state ``Q`` and stored energy ``b`` the transmitter picks the energy
``B'`` to carry out, spends the rest within the period by the single-period
optimum, and pays the expected optimal cost of what follows.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, ParseError, ResourceError
from .fading import OutageCurve, Thresholds, thresholds as curve_thresholds
from .n1 import solve_p3
from .offline import EhTrace, first_period_powers, solve_p1_suboptimal

__all__ = [
    "EhModel",
    "MdpValueTable",
    "build_value_table",
    "mdp_policy_step",
    "bellman_residual",
    "lookahead_policy",
    "load_model_csv",
    "write_model_csv",
]

STOCHASTIC_TOL = 1e-12
MEMORY_CAP = 2 * 1024**3  # bytes for values + policy
_CHUNK = 512


@dataclass(frozen=True, eq=False)
class EhModel:
    """First-order Markov chain over harvest rates.

    ``transition[s, t]`` is ``Pr(Q_{i+1} = states[t] | Q_i = states[s])``;
    ``initial`` is the law of ``Q_1``.
    """

    states: np.ndarray
    transition: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float).ravel()
        trans = np.atleast_2d(np.asarray(self.transition, dtype=float))
        init = np.asarray(self.initial, dtype=float).ravel()
        k = states.size
        if k == 0:
            raise DomainError("model needs at least one state")
        if np.any(states < 0) or not np.all(np.isfinite(states)):
            raise DomainError("states must be finite nonnegative rates")
        if trans.shape != (k, k) or init.shape != (k,):
            raise DomainError(f"transition must be {k}x{k} and initial of length {k}")
        for name, arr in (("transition", trans), ("initial", init)):
            if np.any(arr < 0):
                raise DomainError(f"{name} has negative probabilities")
        if np.any(np.abs(trans.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
            raise DomainError("transition rows must sum to 1")
        if abs(init.sum() - 1.0) > STOCHASTIC_TOL:
            raise DomainError("initial distribution must sum to 1")
        for name, arr in (("states", states), ("transition", trans), ("initial", init)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def iid(cls, states, probs) -> "EhModel":
        probs = np.asarray(probs, dtype=float).ravel()
        return cls(states, np.tile(probs, (probs.size, 1)), probs)

    @classmethod
    def deterministic(cls, rate: float) -> "EhModel":
        return cls([rate], [[1.0]], [1.0])

    @property
    def size(self) -> int:
        return self.states.size

    @property
    def is_iid(self) -> bool:
        return bool(np.all(self.transition == self.transition[0]))

    def index(self, q_state: float) -> int:
        """Position of the rate ``q_state`` among the states."""
        hits = np.nonzero(np.isclose(self.states, q_state, rtol=1e-12, atol=1e-12))[0]
        if hits.size == 0:
            raise DomainError(f"rate {q_state} is not a state of the model")
        return int(hits[0])

    def conditional_means(self, s: int, steps: int) -> np.ndarray:
        """``E[Q_{i+k} | Q_i = states[s]]`` for ``k = 1..steps``."""
        out = np.empty(steps)
        row = np.zeros(self.size)
        row[s] = 1.0
        for k in range(steps):
            row = row @ self.transition
            out[k] = row @ self.states
        return out


def _stationary(trans):
    k = trans.shape[0]
    a = np.vstack([trans.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def load_model_csv(path) -> EhModel:
    """Read an EH model: first row the states, then the transition rows.

    A single probability row after the states is the i.i.d. shorthand.  A
    full Markov chain starts from its stationary law.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append((row_no, [float(cell) for cell in row]))
            except ValueError:
                raise ParseError("non-numeric cell", path, row_no) from None
    if not rows:
        raise ParseError("empty file", path)
    states = rows[0][1]
    probs = rows[1:]
    for row_no, vals in probs:
        if len(vals) != len(states):
            raise ParseError(f"expected {len(states)} probabilities", path, row_no)
    try:
        if len(probs) == 1:
            return EhModel.iid(states, probs[0][1])
        if len(probs) != len(states):
            raise ParseError(f"expected 1 or {len(states)} probability rows, got {len(probs)}", path)
        trans = np.array([vals for _, vals in probs])
        return EhModel(states, trans, _stationary(trans))
    except DomainError as exc:
        raise ParseError(str(exc), path) from None


def write_model_csv(model: EhModel, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([repr(float(q)) for q in model.states])
        rows = model.transition[:1] if model.is_iid else model.transition
        for row in rows:
            writer.writerow([repr(float(p)) for p in row])


@dataclass(frozen=True, eq=False)
class MdpValueTable:
    """Value functions and policy on the battery grid.

    ``values[i, s, g]`` is the optimal expected total outage of periods
    ``i+1..N`` (0-based ``i``) starting in state ``s`` with battery
    ``grid[g]``; ``carry[i, s, g]`` is the grid index of the chosen carry-out.
    ``spend_cost[s][k]`` is the within-period cost of spending
    ``M * states[s] + (k - offsets[s]) * delta``.
    """

    curve: OutageCurve
    model: EhModel
    n: int
    m: int
    delta: float
    grid: np.ndarray
    values: np.ndarray
    carry: np.ndarray
    spend_cost: tuple
    offsets: tuple
    saturated: bool = False
    grid_step: float | None = field(default=None, repr=False)

    def value(self, period: int, q_state: float, battery: float) -> float:
        """``J_period(q_state, battery)`` with linear interpolation in battery."""
        t = _period_index(self, period)
        s = self.model.index(q_state)
        return float(np.interp(battery, self.grid, self.values[t, s]))


def _period_index(table, period):
    if int(period) != period or not 1 <= period <= table.n:
        raise DomainError(f"period {period} outside 1..{table.n}")
    return int(period) - 1


@lru_cache(maxsize=None)
def _p3_total(curve, spend, m, grid_step, thr):
    return m * solve_p3(curve, spend / m, m, grid_step, thr).objective


def _spend_costs(curve, rate, m, delta, size, grid_step, thr):
    """Within-period cost for spends ``M*rate + (k - K)*delta``, ``k = 0..size+K-1``."""
    offset = int(math.floor(m * rate / delta + 1e-9))
    spends = m * rate + (np.arange(size + offset) - offset) * delta
    spends = np.maximum(spends, 0.0)
    if m == 1:
        costs = np.asarray(curve(spends), dtype=float)
    else:
        costs = np.array([_p3_total(curve, float(x), m, grid_step, thr) for x in spends])
    return costs, offset


def _bellman_row(costs, offset, cont, size):
    """``min_{g'} costs[g - g' + offset] + cont[g']`` for every ``g`` and its argmin."""
    # window[g, j] = costs[g + offset - (size - 1) + j], i.e. g' = size - 1 - j
    padded = np.concatenate([np.full(size - 1, np.inf), costs])
    rev_cont = cont[::-1]
    out = np.empty(size)
    arg = np.empty(size, dtype=np.int64)
    for g0 in range(0, size, _CHUNK):
        g1 = min(g0 + _CHUNK, size)
        window = sliding_window_view(padded[g0 + offset:g1 + offset + size - 1], size)
        vals = window + rev_cont
        # ties go to the smallest carry-out, i.e. the largest j
        j = size - 1 - np.argmin(vals[:, ::-1], axis=1)
        out[g0:g1] = vals[np.arange(g1 - g0), j]
        arg[g0:g1] = size - 1 - j
    return out, arg


def build_value_table(curve: OutageCurve, model: EhModel, n: int, m: int,
                      delta: float = 0.01, b_max: float | None = None,
                      grid_step: float | None = None, thr: Thresholds | None = None,
                      memory_cap: int = MEMORY_CAP) -> MdpValueTable:
    """Backward recursion for ``J_N, ..., J_1`` on the battery grid ``0..b_max``."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    if int(n) != n or n < 1 or int(m) != m or m < 1:
        raise DomainError("n and m must be positive integers")
    n, m = int(n), int(m)
    thr = thr or curve_thresholds(curve)
    full = m * float(model.states.max()) * n
    b_max = full if b_max is None else float(b_max)
    if b_max < 0:
        raise DomainError("b_max must be nonnegative")
    size = int(math.floor(b_max / delta + 1e-9)) + 1
    if n * model.size * size * 16 > memory_cap:
        raise ResourceError(f"value table of {n}x{model.size}x{size} exceeds the memory cap")
    saturated = b_max < m * float(model.states.max()) * (n - 1) - 1e-12
    if saturated:
        warnings.warn(f"battery cap {b_max} can saturate; excess energy is spent in-period",
                      RuntimeWarning, stacklevel=2)

    grid = delta * np.arange(size)
    costs, offsets = zip(*(_spend_costs(curve, float(q), m, delta, size, grid_step, thr)
                           for q in model.states))
    values = np.empty((n, model.size, size))
    carry = np.zeros((n, model.size, size), dtype=np.int64)
    for s in range(model.size):
        # last period: no continuation, everything is spent
        values[n - 1, s] = costs[s][offsets[s] + np.arange(size)]
    for t in range(n - 2, -1, -1):
        expected = model.transition @ values[t + 1]
        for s in range(model.size):
            values[t, s], carry[t, s] = _bellman_row(costs[s], offsets[s], expected[s], size)
    for arr in (grid, values, carry):
        arr.setflags(write=False)
    return MdpValueTable(curve, model, n, m, delta, grid, values, carry,
                         tuple(costs), tuple(offsets), saturated, grid_step)


def bellman_residual(table: MdpValueTable) -> float:
    """Largest gap between the stored values and a fresh one-step recursion.

    Recomputed point by point, independently of the vectorised build.
    """
    worst = 0.0
    size = table.grid.size
    model = table.model
    for t in range(table.n):
        if t == table.n - 1:
            expected = np.zeros((model.size, size))
        else:
            expected = model.transition @ table.values[t + 1]
        for s in range(model.size):
            costs, offset = table.spend_cost[s], table.offsets[s]
            for g in range(size):
                top = min(size - 1, g + offset)
                carry = np.arange(top + 1) if t < table.n - 1 else np.array([0])
                best = float(np.min(costs[g - carry + offset] + expected[s, carry]))
                worst = max(worst, abs(best - table.values[t, s, g]))
    return worst


def mdp_policy_step(table: MdpValueTable, period: int, q_state: float,
                    battery: float) -> tuple[np.ndarray, float]:
    """Block powers for this period and the battery carried to the next.

    The stored decision of the nearest grid battery is used; the carry-out
    is clipped to the energy actually available.
    """
    t = _period_index(table, period)
    s = table.model.index(q_state)
    if battery < 0:
        raise DomainError("battery must be nonnegative")
    g = min(int(round(battery / table.delta)), table.grid.size - 1)
    available = battery + table.m * float(table.model.states[s])
    carry_out = min(float(table.grid[table.carry[t, s, g]]), available)
    spend = available - carry_out
    thr = curve_thresholds(table.curve)
    profile = solve_p3(table.curve, spend / table.m, table.m, table.grid_step, thr).profile
    return profile, carry_out


def lookahead_policy(curve: OutageCurve, model: EhModel, q: int, period: int,
                     q_state: float, battery: float, n: int, m: int,
                     solver: str = "optimal", grid_step: float | None = None,
                     thr: Thresholds | None = None) -> np.ndarray:
    """Block powers of the current period under ``q``-period look-ahead.

    The current period is credited with the stored energy, the next
    ``q - 1`` periods with their conditional mean harvest; the offline
    solver runs on that virtual trace and only its first period is kept.
    ``q = 1`` spends everything now.
    """
    if int(q) != q or q < 1:
        raise DomainError("look-ahead depth q must be a positive integer")
    if not 1 <= period <= n:
        raise DomainError(f"period {period} outside 1..{n}")
    s = model.index(q_state)
    horizon = min(int(q), n - int(period) + 1)
    rates = np.concatenate([[q_state + battery / m], model.conditional_means(s, horizon - 1)])
    return _virtual_first_period(curve, tuple(rates), m, solver, grid_step, thr)


def _virtual_first_period(curve, rates, m, solver, grid_step, thr):
    trace = EhTrace(rates, m)
    thr = thr or curve_thresholds(curve)
    if solver == "optimal":
        return first_period_powers(curve, trace, grid_step, thr)
    if solver == "suboptimal":
        return solve_p1_suboptimal(curve, trace, thr)[0]
    raise DomainError(f"unknown solver {solver!r}")
