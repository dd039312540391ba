"""Monte Carlo checks of outage values and policy evaluation over sampled traces.

Every generator is a Philox counter-based ``numpy`` generator built from an
explicit integer seed, so a seed and a config reproduce a run exactly.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, UnsupportedError
from .fading import WEIBULL, OutageCurve, Thresholds, thresholds as curve_thresholds
from .n1 import solve_p3
from .offline import EhTrace, average_outage, solve_p1_optimal, solve_p1_suboptimal
from .online import EhModel, MdpValueTable, _virtual_first_period

__all__ = [
    "SimConfig",
    "PolicyResult",
    "make_rng",
    "sample_gain_sq",
    "simulate_outage",
    "gen_trace",
    "sample_paths",
    "write_trace_csv",
    "evaluate_policy",
    "evaluate_policies",
    "parse_policy",
    "RESULT_FIELDS",
]

RESULT_FIELDS = ("policy", "param", "mean_outage", "stderr", "trials", "seed")
_CHUNK = 1 << 20  # channel draws per batch


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int
    curve: OutageCurve
    model: EhModel | None = None

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError("trials must be a positive integer")


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    param: float | str
    mean_outage: float
    stderr: float
    trials: int
    seed: int | None = None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in RESULT_FIELDS}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_gain_sq(curve: OutageCurve, rng: np.random.Generator, size=None):
    """Draw ``|h|^2`` with ``Pr(|h|^2 < x) = 1 - exp(-x^(beta/2))``."""
    if curve.family != WEIBULL:
        raise UnsupportedError("channel sampling needs a Weibull curve")
    e = rng.standard_exponential(size)
    return e ** (2.0 / curve.beta)


def simulate_outage(curve: OutageCurve, profile, trials: int,
                    rng: np.random.Generator) -> tuple[float, float]:
    """Empirical average outage of ``profile`` and its standard error.

    Each trial draws an independent gain per block; the block is in outage
    when ``log2(1 + |h|^2 P) < R``.
    """
    p = np.asarray(profile, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0):
        raise DomainError("profile must be a nonempty nonnegative array")
    if int(trials) != trials or trials < 1:
        raise DomainError("trials must be a positive integer")
    per_batch = max(1, _CHUNK // p.size)
    total = total_sq = 0.0
    done = 0
    while done < trials:
        k = min(per_batch, trials - done)
        gain = sample_gain_sq(curve, rng, (k, p.size))
        out = np.log2(1.0 + gain * p) < curve.rate
        frac = out.mean(axis=1)
        total += frac.sum()
        total_sq += (frac ** 2).sum()
        done += k
    mean = total / trials
    var = max(total_sq / trials - mean ** 2, 0.0)
    return float(mean), float(math.sqrt(var / trials))


def sample_paths(model: EhModel, n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """State indices of ``trials`` independent chains, shape ``(trials, n)``."""
    paths = np.empty((trials, n), dtype=np.int64)
    cum_init = np.cumsum(model.initial)
    cum_trans = np.cumsum(model.transition, axis=1)
    last = model.size - 1
    u = rng.random((trials, n))
    paths[:, 0] = np.minimum(np.searchsorted(cum_init, u[:, 0], side="right"), last)
    for t in range(1, n):
        rows = cum_trans[paths[:, t - 1]]
        paths[:, t] = np.minimum((u[:, t, None] >= rows).sum(axis=1), last)
    return paths


def gen_trace(model: EhModel, n: int, rng: np.random.Generator, m: int = 1) -> EhTrace:
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    path = sample_paths(model, int(n), 1, rng)[0]
    return EhTrace(tuple(model.states[path]), m)


def write_trace_csv(trace: EhTrace, path) -> None:
    """Write a trace as ``period,rate`` rows (1-based periods)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period", "rate"])
        for i, q in enumerate(trace.rates, start=1):
            writer.writerow([i, repr(float(q))])


_LOOKAHEAD = re.compile(r"lookahead\((\d+|N)\)$")


def parse_policy(tag: str, n: int) -> tuple[str, int | None]:
    """Split a policy tag such as ``lookahead(2)`` into name and depth."""
    if tag in ("offline-opt", "offline-sub", "mdp", "greedy"):
        return tag, None
    hit = _LOOKAHEAD.match(tag)
    if hit:
        q = n if hit.group(1) == "N" else int(hit.group(1))
        if q < 1:
            raise DomainError("look-ahead depth must be positive")
        return "lookahead", q
    raise DomainError(f"unknown policy {tag!r}")


class _Runner:
    """Per-trace profiles of one policy, with memoised sub-solves."""

    def __init__(self, name, q, curve, model, n, m, table, grid_step, thr):
        self.name, self.q = name, q
        self.curve, self.model, self.n, self.m = curve, model, n, m
        self.table, self.grid_step, self.thr = table, grid_step, thr
        self.memo = {}
        self.means = [model.conditional_means(s, n) for s in range(model.size)]
        self.iid = model.is_iid

    def profile(self, path) -> np.ndarray:
        rates = tuple(float(q) for q in self.model.states[path])
        if self.name in ("offline-opt", "offline-sub"):
            key = rates
            if key not in self.memo:
                trace = EhTrace(rates, self.m)
                if self.name == "offline-opt":
                    self.memo[key] = solve_p1_optimal(self.curve, trace, self.grid_step, self.thr)
                else:
                    self.memo[key] = solve_p1_suboptimal(self.curve, trace, self.thr)
            return self.memo[key]
        rows = np.empty((self.n, self.m))
        battery = 0.0
        for t, s in enumerate(path):
            rows[t] = self.step(t, int(s), battery)
            battery = max(battery + self.m * rates[t] - float(rows[t].sum()), 0.0)
        return rows

    def step(self, t, s, battery):
        if self.name == "mdp":
            table = self.table
            g = min(int(round(battery / table.delta)), table.grid.size - 1)
            available = battery + self.m * float(self.model.states[s])
            carry = min(float(table.grid[table.carry[t, s, g]]), available)
            return self.split(available - carry)
        q = 1 if self.name == "greedy" else self.q
        horizon = min(q, self.n - t)
        first = float(self.model.states[s]) + battery / self.m
        # the prediction depends on the state only through its conditional means
        key = (horizon, first, -1 if self.iid else s)
        if key not in self.memo:
            rates = (first,) + tuple(self.means[s][:horizon - 1])
            self.memo[key] = _virtual_first_period(self.curve, rates, self.m, "optimal",
                                                   self.grid_step, self.thr)
        return self.memo[key]

    def split(self, spend):
        key = ("p3", spend)
        if key not in self.memo:
            self.memo[key] = solve_p3(self.curve, spend / self.m, self.m,
                                      self.grid_step, self.thr).profile
        return self.memo[key]


def _mdp_analytic(table: MdpValueTable, paths: np.ndarray) -> np.ndarray:
    """Per-trace average outage of the MDP policy, vectorised over traces."""
    trials, n = paths.shape
    g = np.zeros(trials, dtype=np.int64)
    total = np.zeros(trials)
    for t in range(n):
        s = paths[:, t]
        nxt = table.carry[t, s, g]
        for k in range(table.model.size):
            rows = s == k
            total[rows] += table.spend_cost[k][g[rows] - nxt[rows] + table.offsets[k]]
        g = nxt
    return total / (n * table.m)


def evaluate_policies(policies, curve: OutageCurve, model: EhModel, n: int, m: int,
                      trials: int, rng: np.random.Generator, table: MdpValueTable | None = None,
                      grid_step: float | None = None, thr: Thresholds | None = None,
                      mode: str = "analytic", seed: int | None = None,
                      param=None, return_samples: bool = False):
    """Evaluate several policies on one common set of sampled traces.

    ``mode="analytic"`` scores each block by ``F(P)``; ``mode="indicator"``
    draws a channel gain per block instead.  Returns a list of
    :class:`PolicyResult` and, with ``return_samples``, the per-trace means.
    ``param`` labels every row (e.g. the swept mean rate); by default it is
    the look-ahead depth, blank for other policies.
    """
    if mode not in ("analytic", "indicator"):
        raise DomainError(f"unknown evaluation mode {mode!r}")
    if int(trials) != trials or trials < 1:
        raise DomainError("trials must be a positive integer")
    parsed = [(tag, *parse_policy(tag, n)) for tag in policies]
    if any(name == "mdp" for _, name, _ in parsed):
        if table is None:
            raise DomainError("the mdp policy needs a prebuilt value table")
        if (table.n, table.m) != (n, m) or table.model is not model or table.curve != curve:
            raise DomainError("value table was built for a different setup")
    thr = thr or curve_thresholds(curve)
    paths = sample_paths(model, n, int(trials), rng)
    results, samples = [], {}
    for tag, name, q in parsed:
        if mode == "analytic" and name == "mdp":
            per_trace = _mdp_analytic(table, paths)
        elif mode == "analytic" and name == "greedy":
            # the battery is empty at every period start, so costs are per state
            cost = np.array([solve_p3(curve, float(q), m, grid_step, thr).objective
                             for q in model.states])
            per_trace = cost[paths].mean(axis=1)
        else:
            runner = _Runner(name, q, curve, model, n, m, table, grid_step, thr)
            per_trace = np.empty(trials)
            for k, path in enumerate(paths):
                prof = runner.profile(path)
                if mode == "analytic":
                    per_trace[k] = average_outage(curve, prof)
                else:
                    gain = sample_gain_sq(curve, rng, prof.size)
                    per_trace[k] = np.mean(np.log2(1.0 + gain * prof.ravel()) < curve.rate)
        stderr = float(per_trace.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        label = param if param is not None else (q if q is not None else "")
        results.append(PolicyResult(tag, label, float(per_trace.mean()), stderr, int(trials), seed))
        samples[tag] = per_trace
    return (results, samples) if return_samples else results


def evaluate_policy(policy: str, curve: OutageCurve, model: EhModel, n: int, m: int,
                    trials: int, rng: np.random.Generator, **kwargs) -> PolicyResult:
    return evaluate_policies([policy], curve, model, n, m, trials, rng, **kwargs)[0]
