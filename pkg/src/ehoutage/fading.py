"""Outage-probability curves and their shape thresholds.

An :class:`OutageCurve` maps transmit power ``P`` to the probability that a
block is in outage at fixed rate ``R``.  Two families are supported: Weibull
fading (Rayleigh when ``beta == 2``) and a tabulated curve read from data.

The thresholds that drive every allocator are

* ``p_b``: the inflection point, below which the curve is concave and above
  which it is convex;
* ``p_a``: the tangent point of the line drawn from ``(0, 1)`` that stays
  under the whole curve.  Powers below ``p_a`` are never worth spending on
  their own; on-off schemes aim their "on" level at ``p_a``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

from .errors import (
    BracketError,
    ClassificationError,
    DomainError,
    ParseError,
    ResolutionError,
    SearchError,
)

__all__ = [
    "OutageCurve",
    "Thresholds",
    "CurveClass",
    "outage_prob",
    "compute_pb",
    "compute_pa",
    "slope_min_pa",
    "classify",
    "thresholds",
    "verification_grid",
    "load_tabulated_csv",
]

WEIBULL = "weibull"
TABULATED = "tabulated"

GRID_POINTS = 4096
SHAPE_TOL = 1e-9


@dataclass(frozen=True)
class OutageCurve:
    """Outage probability ``F(P)`` for one fading family at rate ``rate``.

    Build instances with :meth:`weibull`, :meth:`rayleigh` or
    :meth:`tabulated`; the curve object is callable and vectorised.
    """

    family: str
    rate: float
    beta: float | None = None
    table: tuple[tuple[float, float], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"rate must be positive, got {self.rate}")
        if self.family == WEIBULL:
            if self.beta is None or not self.beta > 0:
                raise DomainError(f"Weibull beta must be positive, got {self.beta}")
        elif self.family == TABULATED:
            if not self.table:
                raise DomainError("tabulated curve needs a table")
            _check_table(self.table)
        else:
            raise DomainError(f"unknown fading family {self.family!r}")

    @classmethod
    def weibull(cls, beta: float, rate: float) -> "OutageCurve":
        return cls(WEIBULL, float(rate), beta=float(beta))

    @classmethod
    def rayleigh(cls, rate: float) -> "OutageCurve":
        return cls.weibull(2.0, rate)

    @classmethod
    def tabulated(cls, powers, probabilities, rate: float) -> "OutageCurve":
        """Curve interpolated linearly between ``(power, probability)`` nodes.

        ``(0, 1)`` is prepended when missing.  Beyond the last node the curve
        decays exponentially with the slope of the last segment, so it stays
        strictly decreasing, tends to 0 and gains no kink at the junction.
        """
        pairs = tuple((float(p), float(q)) for p, q in zip(powers, probabilities))
        if pairs and pairs[0][0] > 0:
            pairs = ((0.0, 1.0),) + pairs
        return cls(TABULATED, float(rate), table=pairs)

    @property
    def rate_term(self) -> float:
        """Power threshold ``2**R - 1`` of the outage event."""
        return 2.0 ** self.rate - 1.0

    @cached_property
    def _weibull_consts(self):
        return self.rate_term, self.beta / 2.0

    @cached_property
    def _nodes(self):
        arr = np.asarray(self.table, dtype=float)
        return arr[:, 0], arr[:, 1]

    def survival(self, power):
        """``1 - F(P)``, computed without cancellation for the Weibull family."""
        p = np.asarray(power, dtype=float)
        if self.family == WEIBULL:
            with np.errstate(divide="ignore", over="ignore"):
                ratio = np.where(p > 0, self.rate_term / np.where(p > 0, p, 1.0), np.inf)
                out = np.exp(-np.power(ratio, self.beta / 2.0))
            return out if out.ndim else float(out)
        return 1.0 - self(power)

    def __call__(self, power):
        if self.family == WEIBULL and isinstance(power, (float, int)):
            # scalar path: the 1-D searches call this thousands of times
            if power <= 0:
                return 1.0
            c, half = self._weibull_consts
            return -math.expm1(-(c / power) ** half)
        p = np.asarray(power, dtype=float)
        if self.family == WEIBULL:
            with np.errstate(divide="ignore", over="ignore"):
                ratio = np.where(p > 0, self.rate_term / np.where(p > 0, p, 1.0), np.inf)
                out = -np.expm1(-np.power(ratio, self.beta / 2.0))
        else:
            xs, ys = self._nodes
            out = np.interp(p, xs, ys)
            tail = p > xs[-1]
            if np.any(tail):
                slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
                rate = -slope / ys[-1]
                out = np.where(tail, ys[-1] * np.exp(-rate * (p - xs[-1])), out)
        return out if out.ndim else float(out)


def _check_table(table):
    xs = [p for p, _ in table]
    ys = [q for _, q in table]
    if len(xs) < 2:
        raise DomainError("tabulated curve needs at least two nodes")
    if xs[0] != 0.0 or ys[0] != 1.0:
        raise DomainError("tabulated curve must start at (0, 1)")
    for a, b in zip(xs, xs[1:]):
        if not b > a:
            raise DomainError("tabulated powers must be strictly ascending")
    for a, b in zip(ys, ys[1:]):
        if not b < a:
            raise DomainError("tabulated probabilities must be strictly decreasing")
    if not ys[-1] > 0:
        raise DomainError("tabulated probabilities must stay positive")


@dataclass(frozen=True)
class Thresholds:
    p_b: float
    p_a: float
    tol: float


@dataclass(frozen=True)
class CurveClass:
    kind: str  # "A" (convex) or "B" (concave then convex)
    thresholds: Thresholds


def outage_prob(curve: OutageCurve, power):
    """Outage probability at ``power``; equals 1 at zero power."""
    if np.any(np.asarray(power) < 0):
        raise DomainError("power must be nonnegative")
    return curve(power)


def verification_grid(curve: OutageCurve, points: int = GRID_POINTS) -> np.ndarray:
    """Log-spaced powers over ``[1e-4 c, 100 c]`` with ``c = 2**R - 1``."""
    c = curve.rate_term
    return np.geomspace(1e-4 * c, 100.0 * c, points)


def _second_differences(curve: OutageCurve, grid: np.ndarray) -> np.ndarray:
    # divided differences of F on the power axis normalised by c; computed
    # on the survival function so the flat region near P = 0 stays exact
    x = grid / curve.rate_term
    s = curve.survival(grid)
    d1 = np.diff(s) / np.diff(x)
    return -2.0 * np.diff(d1) / (x[2:] - x[:-2])


def _tabulated_kinks(curve: OutageCurve):
    """Slope increments of the tabulated curve at its interior nodes."""
    xs, ys = curve._nodes
    if len(xs) < 4:
        raise ResolutionError("tabulated curve needs at least four nodes for shape analysis")
    c = curve.rate_term
    slopes = np.diff(ys) / (np.diff(xs) / c)
    return xs[1:-1], np.diff(slopes)


def compute_pb(curve: OutageCurve, tol: float = SHAPE_TOL) -> float:
    """Inflection power separating the concave and convex parts of ``F``.

    For Weibull, ``F'' = 0`` where ``(c/P)^(beta/2) = (beta/2 + 1)/(beta/2)``,
    i.e. ``P_b = c * (k/(k+1))**(1/k)`` with ``k = beta/2``.
    """
    if curve.family == WEIBULL:
        half = curve.beta / 2.0
        return (half / (half + 1.0)) ** (1.0 / half) * curve.rate_term
    nodes, kinks = _tabulated_kinks(curve)
    concave = np.nonzero(kinks < -tol)[0]
    if concave.size == 0:
        return 0.0
    after = concave[-1] + 1
    if after >= kinks.size:
        raise ResolutionError("no convex node after the last concave node")
    return float(nodes[after])


def _tangent_probe(curve: OutageCurve, p: float, eps: float) -> bool:
    """True when the chord from (0, 1) to (p, F(p)) crosses ``F`` downward at p.

    That happens exactly while ``p`` is still below the tangent point.
    """
    slope = (curve(p) - 1.0) / p
    left = p - eps if p > eps else 0.5 * p
    right = p + eps
    return slope * left + 1.0 < curve(left) and slope * right + 1.0 > curve(right)


def compute_pa(curve: OutageCurve, tol: float = 1e-6, a_up: float | None = None,
               max_doublings: int = 8) -> float:
    """Tangent point ``P_a`` by bisection on the chord test.

    ``tol`` is both the stopping width and the probe offset of the chord
    test.  ``a_up`` defaults to ``100 * (2**R - 1)`` and is doubled when it
    turns out to lie below the tangent point.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    pb = compute_pb(curve)
    if pb == 0.0:
        return 0.0
    grid = verification_grid(curve, 64)
    if np.any(np.diff(curve(grid)) > 0) or not curve(grid[-1]) < curve(grid[0]):
        raise SearchError("outage curve is not strictly decreasing")

    upper = 100.0 * curve.rate_term if a_up is None else float(a_up)
    # the tangent point lies beyond P_b, where the probe can be fooled by F == 1
    for _ in range(max_doublings + 1):
        if upper > pb and not _tangent_probe(curve, upper, tol):
            break
        upper *= 2.0
    else:
        raise BracketError(f"tangent point not bracketed below {upper / 2.0}")

    low, up = pb, upper
    while up - low > tol:
        mid = 0.5 * (low + up)
        if _tangent_probe(curve, mid, tol):
            low = mid
        else:
            up = mid
    result = 0.5 * (low + up)
    if result < tol:
        raise SearchError("bisection collapsed to zero; curve has no tangent point")
    return result


def slope_min_pa(curve: OutageCurve, grid_step: float, p_max: float) -> float:
    """Grid argmin of the chord slope ``(F(P) - 1) / P`` over ``(0, p_max]``.

    Independent of :func:`compute_pa`; used to cross-check it.
    """
    if not (grid_step > 0 and p_max > 0):
        raise DomainError("grid_step and p_max must be positive")
    n = int(math.floor(p_max / grid_step + 1e-9))
    if n < 2:
        raise BracketError("grid has fewer than two points")
    grid = grid_step * np.arange(1, n + 1)
    slopes = -curve.survival(grid) / grid
    k = int(np.argmin(slopes))
    if k == n - 1:
        raise BracketError(f"slope minimum sits on the boundary p_max={p_max}")
    return float(grid[k])


def classify(curve: OutageCurve, tol: float = SHAPE_TOL, pa_tol: float = 1e-6) -> CurveClass:
    """Type A (convex) or Type B (concave then convex) with its thresholds."""
    if curve.family == TABULATED:
        _, d2 = _tabulated_kinks(curve)
    else:
        d2 = _second_differences(curve, verification_grid(curve))
    concave = d2 < -tol
    if not np.any(concave):
        return CurveClass("A", Thresholds(0.0, 0.0, pa_tol))
    last = np.nonzero(concave)[0][-1]
    if np.any(d2[:last] > tol):
        raise ClassificationError("curve turns convex before its last concave stretch")
    p_b = compute_pb(curve, tol)
    if not p_b > 0:
        raise ClassificationError("concave stretch found but inflection point is zero")
    p_a = compute_pa(curve, pa_tol)
    return CurveClass("B", Thresholds(p_b, p_a, pa_tol))


@lru_cache(maxsize=256)
def thresholds(curve: OutageCurve, tol: float = 1e-6) -> Thresholds:
    """Cached ``(p_b, p_a)`` pair used by the allocators."""
    return classify(curve, pa_tol=tol).thresholds


def load_tabulated_csv(path, rate: float) -> OutageCurve:
    """Read a ``power,probability`` CSV (one header line) into a curve."""
    path = Path(path)
    powers, probs = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", path)
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 2:
                raise ParseError("expected two columns", path, row_no)
            try:
                p, q = float(row[0]), float(row[1])
            except ValueError:
                raise ParseError("non-numeric cell", path, row_no) from None
            if powers and not p > powers[-1]:
                raise ParseError("powers must be strictly ascending", path, row_no)
            powers.append(p)
            probs.append(q)
    if not powers:
        raise ParseError("no data rows", path)
    try:
        return OutageCurve.tabulated(powers, probs, rate)
    except DomainError as exc:
        raise ParseError(str(exc), path) from None
