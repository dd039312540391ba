import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehoutage.errors import (
    BracketError,
    ClassificationError,
    DomainError,
    ParseError,
    ResolutionError,
    SearchError,
)
from ehoutage.fading import (
    OutageCurve,
    classify,
    compute_pa,
    compute_pb,
    load_tabulated_csv,
    outage_prob,
    slope_min_pa,
    thresholds,
    verification_grid,
)

GRID = [(b, r) for b in (2, 4, 8) for r in (0.5, 1, 3)]


def tangent_closed_form(beta, rate):
    # (F - 1)/P is minimised where (c/P)^(beta/2) = 2/beta
    return (2.0**rate - 1.0) * (beta / 2.0) ** (2.0 / beta)


def test_outage_examples():
    c = OutageCurve.rayleigh(1)
    assert outage_prob(c, 0.0) == 1.0
    assert outage_prob(c, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert outage_prob(c, 1e12) == pytest.approx(0.0, abs=1e-11)
    assert np.allclose(outage_prob(c, [0.0, 1.0]), [1.0, 0.6321205588285577])


def test_negative_power_rejected():
    with pytest.raises(DomainError):
        outage_prob(OutageCurve.rayleigh(1), -0.1)


@pytest.mark.parametrize("kwargs", [dict(beta=0, rate=1), dict(beta=2, rate=0), dict(beta=-1, rate=1)])
def test_bad_weibull(kwargs):
    with pytest.raises(DomainError):
        OutageCurve.weibull(**kwargs)


def test_pb_examples():
    assert compute_pb(OutageCurve.rayleigh(1)) == pytest.approx(0.5, abs=1e-15)
    # F'' vanishes where (c/P)^(beta/2) = (beta/2 + 1)/(beta/2)
    assert compute_pb(OutageCurve.weibull(8, 3)) == pytest.approx(7 * 0.8**0.25, abs=1e-12)
    assert compute_pb(OutageCurve.weibull(4, 1)) == pytest.approx(math.sqrt(2 / 3), abs=1e-12)


def test_pb_matches_finite_difference_sign_change():
    c = OutageCurve.rayleigh(1)
    h = 1e-5
    p = np.arange(0.3, 0.7, h)
    second = (c(p + h) - 2 * c(p) + c(p - h)) / h**2
    k = np.nonzero(np.diff(np.sign(second)) != 0)[0]
    assert len(k) == 1
    assert abs(p[k[0]] - compute_pb(c)) < 1e-4


@pytest.mark.parametrize("rate, expected", [(1, 1.0), (2, 3.0)])
def test_pa_rayleigh(rate, expected):
    assert compute_pa(OutageCurve.rayleigh(rate), tol=1e-6) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("beta, rate", GRID)
def test_pa_closed_form_and_slope_oracle(beta, rate):
    c = OutageCurve.weibull(beta, rate)
    pa = compute_pa(c, tol=1e-6)
    assert pa == pytest.approx(tangent_closed_form(beta, rate), abs=2e-6)
    step = 1e-4
    assert abs(slope_min_pa(c, step, 10 * c.rate_term) - pa) <= max(1e-6, step)


def test_pa_above_pb():
    c = OutageCurve.weibull(8, 3)
    assert compute_pa(c) > compute_pb(c)


def test_pa_not_bracketed():
    with pytest.raises(BracketError):
        compute_pa(OutageCurve.weibull(8, 3), a_up=1.0, max_doublings=1)


def test_pa_rejects_bad_tol():
    with pytest.raises(DomainError):
        compute_pa(OutageCurve.rayleigh(1), tol=0)


def test_slope_min_examples():
    c = OutageCurve.rayleigh(1)
    assert slope_min_pa(c, 1e-4, 20) == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(BracketError):
        slope_min_pa(c, 1e-4, 0.01)
    with pytest.raises(DomainError):
        slope_min_pa(c, 0, 1)


def test_slope_min_unique():
    c = OutageCurve.weibull(8, 3)
    step = 1e-4
    grid = step * np.arange(1, int(50 / step) + 1)
    s = -c.survival(grid) / grid
    k = int(np.argmin(s))
    # unimodal: non-increasing (flat where F rounds to 1) then strictly rising
    assert np.all(np.diff(s[:k + 1]) <= 0) and np.all(np.diff(s[k:]) > 0)


@pytest.mark.parametrize("beta, rate", [(8, 3), (2, 1)])
def test_classify_type_b(beta, rate):
    cls = classify(OutageCurve.weibull(beta, rate))
    assert cls.kind == "B"
    assert cls.thresholds.p_a > cls.thresholds.p_b > 0


def test_classify_tabulated_convex():
    p = np.linspace(0, 5, 40)
    curve = OutageCurve.tabulated(p, np.exp(-p), rate=1)
    cls = classify(curve)
    assert cls.kind == "A"
    assert cls.thresholds.p_a == cls.thresholds.p_b == 0.0


def test_classify_neither_shape():
    # convex, then concave, then convex again
    p = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    q = [1.0, 0.5, 0.4, 0.35, 0.2, 0.1, 0.05]
    with pytest.raises(ClassificationError):
        classify(OutageCurve.tabulated(p, q, rate=1))


def test_tabulated_concave_convex():
    c = OutageCurve.weibull(2, 1)
    p = np.linspace(0.05, 8, 400)
    tab = OutageCurve.tabulated(p, c(p), rate=1)
    cls = classify(tab)
    assert cls.kind == "B"
    assert abs(cls.thresholds.p_b - 0.5) < 0.05
    assert abs(cls.thresholds.p_a - 1.0) < 0.05


def test_tabulated_tail_and_interp():
    tab = OutageCurve.tabulated([1.0, 2.0, 3.0], [0.8, 0.5, 0.4], rate=1)
    assert tab(0.0) == 1.0
    assert tab(1.5) == pytest.approx(0.65)
    beyond = tab(np.array([3.0, 4.0, 10.0]))
    assert beyond[0] == pytest.approx(0.4)
    assert np.all(np.diff(beyond) < 0) and beyond[-1] > 0


def test_tabulated_too_coarse():
    tab = OutageCurve.tabulated([1.0, 2.0], [0.5, 0.2], rate=1)
    with pytest.raises(ResolutionError):
        compute_pb(tab)


@pytest.mark.parametrize("p, q", [([0, 1, 1], [1, 0.5, 0.4]), ([0, 1, 2], [1, 0.5, 0.6]), ([0, 1], [1, 0])])
def test_tabulated_invalid(p, q):
    with pytest.raises(DomainError):
        OutageCurve.tabulated(p, q, rate=1)


def test_load_tabulated_csv(tmp_path):
    path = tmp_path / "curve.csv"
    path.write_text("power,probability\n0.5,0.9\n1.0,0.6\n2.0,0.3\n3.0,0.2\n")
    c = load_tabulated_csv(path, rate=1)
    assert c(1.0) == pytest.approx(0.6)
    bad = tmp_path / "bad.csv"
    bad.write_text("power,probability\n0.5,0.9\n0.4,0.6\n")
    with pytest.raises(ParseError, match="row 2"):
        load_tabulated_csv(bad, rate=1)
    bad.write_text("power,probability\n0.5,x\n")
    with pytest.raises(ParseError, match="row 1"):
        load_tabulated_csv(bad, rate=1)
    bad.write_text("")
    with pytest.raises(ParseError, match="empty"):
        load_tabulated_csv(bad, rate=1)


def test_increasing_curve_is_search_error():
    # a table is strictly decreasing by construction, so poke a Weibull curve
    class Rising(OutageCurve):
        def __call__(self, power):
            return 1.0 - OutageCurve.__call__(self, power)

    with pytest.raises(SearchError):
        compute_pa(Rising("weibull", 1.0, beta=2.0))


@pytest.mark.parametrize("beta, rate", GRID)
def test_shape_split(beta, rate):
    c = OutageCurve.weibull(beta, rate)
    pb = compute_pb(c)
    h = 1e-4 * c.rate_term
    p = np.arange(2 * h, 5 * c.rate_term, h)
    x = p / c.rate_term
    s = c.survival(p)
    d2 = -(s[2:] - 2 * s[1:-1] + s[:-2]) / (x[1] - x[0]) ** 2
    mid = p[1:-1]
    assert np.all(d2[mid <= pb - h] <= 1e-9)
    assert np.all(d2[mid >= pb + h] >= -1e-9)


@pytest.mark.parametrize("beta, rate", GRID)
def test_chord_bound(beta, rate):
    c = OutageCurve.weibull(beta, rate)
    pa = compute_pa(c)
    x = np.linspace(1e-6, 50 * pa, 20000)
    chord = (c(pa) - 1) / pa * x + 1
    assert np.all(c(x) >= chord - 1e-6)


def test_thresholds_cached():
    c = OutageCurve.weibull(8, 3)
    assert thresholds(c) is thresholds(OutageCurve.weibull(8, 3))


def test_verification_grid():
    g = verification_grid(OutageCurve.weibull(8, 3))
    assert g.size == 4096
    assert g[0] == pytest.approx(7e-4) and g[-1] == pytest.approx(700)


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(2, 12), rate=st.floats(0.1, 4))
def test_monotone_and_limits(beta, rate):
    c = OutageCurve.weibull(beta, rate)
    g = verification_grid(c, 512)
    f = c(g)
    assert np.all((f > 0) & (f <= 1))
    # strictly decreasing wherever double precision can tell values apart
    assert np.all(np.diff(f) <= 1e-12)
    assert f[0] > 1 - 1e-4
    assert c(1e9 * c.rate_term) < 1e-3


@settings(max_examples=30, deadline=None)
@given(beta=st.floats(1, 10), rate=st.floats(0.2, 3))
def test_pa_matches_tangency(beta, rate):
    c = OutageCurve.weibull(beta, rate)
    assert compute_pa(c) == pytest.approx(tangent_closed_form(beta, rate), rel=1e-5, abs=2e-6)
