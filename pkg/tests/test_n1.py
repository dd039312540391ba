import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ehoutage.errors import DomainError
from ehoutage.fading import OutageCurve, thresholds
from ehoutage.n1 import f_k_objective, search_low_power, solve_p3, suboptimal_onoff_n1
from ehoutage.oracle import brute_force_p3

RAY = OutageCurve.rayleigh(1)
W83 = OutageCurve.weibull(8, 3)


def check_structure(sol, curve, q1, m):
    thr = thresholds(curve)
    p = sol.profile
    assert p.shape == (m,)
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(m * q1, rel=1e-12, abs=1e-12)
    assert np.all(np.diff(p) >= -1e-12)
    assert np.count_nonzero((p > 0) & (p < thr.p_b)) <= 1
    high = p[p > thr.p_b]
    if high.size:
        assert np.ptp(high) <= 1e-9 * max(1.0, high.max())
    assert sol.objective == pytest.approx(float(np.mean(curve(p))), abs=1e-15)


def test_f_k_examples():
    assert f_k_objective(RAY, 2, 1, 1) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert f_k_objective(RAY, 0, 1, 0) == 1.0
    assert f_k_objective(RAY, 3.5, 3, 0) == pytest.approx(0.25 * (1 + 3 * (1 - math.exp(-3 / 3.5))), abs=1e-12)
    with pytest.raises(DomainError):
        f_k_objective(RAY, 2, 1, 1.5)
    with pytest.raises(DomainError):
        f_k_objective(RAY, 2, 0, 0)


def test_solve_p3_uniform_above_pa():
    sol = solve_p3(RAY, 2.0, 5)
    assert np.allclose(sol.profile, 2.0)
    assert sol.objective == pytest.approx(1 - math.exp(-0.5), abs=1e-15)


def test_solve_p3_frozen_oracle():
    sol = solve_p3(RAY, 0.35, 10, grid_step=1e-4)
    assert sol.k0 == 3
    # frozen from a structure-free min-plus recursion over 10 blocks at grid 1e-3
    assert sol.objective == pytest.approx(0.8724373770704119, abs=1e-4)
    assert sol.p_hat0 == pytest.approx(0.875)
    check_structure(sol, RAY, 0.35, 10)


def test_solve_p3_k0_zero_and_zero_budget():
    sol = solve_p3(RAY, 0.05, 4)
    assert sol.k0 == 0
    assert np.allclose(sol.profile, [0, 0, 0, 0.2])
    z = solve_p3(RAY, 0.0, 3)
    assert np.all(z.profile == 0) and z.objective == 1.0


@pytest.mark.parametrize("q1, m", [(-1, 2), (1, 0), (1, 1.5)])
def test_solve_p3_domain(q1, m):
    with pytest.raises(DomainError):
        solve_p3(RAY, q1, m)
    with pytest.raises(DomainError):
        suboptimal_onoff_n1(RAY, q1, m)


def test_onoff_examples():
    assert np.allclose(suboptimal_onoff_n1(RAY, 1.5, 4).profile, 1.5)
    p = suboptimal_onoff_n1(RAY, 0.35, 10).profile
    assert np.all(p[:7] == 0) and np.allclose(p[7:], 3.5 / 3)


def test_onoff_on_power_converges_to_pa():
    p = suboptimal_onoff_n1(RAY, 0.35, 10**4).profile
    assert abs(p[-1] - 1.0) < 1e-3


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("frac", [0.1, 0.35, 0.8, 1.5])
def test_matches_brute_force(m, frac):
    q1 = frac * thresholds(RAY).p_a
    sol = solve_p3(RAY, q1, m)
    bf = brute_force_p3(RAY, q1, m, 1e-2)
    assert sol.objective <= bf.objective + 1e-6
    assert sol.objective >= bf.objective - 1e-2


def test_search_low_power_tie_goes_low():
    p, v = search_low_power(lambda x: np.zeros_like(np.asarray(x, dtype=float)), 1.0, 1.0, 0.1)
    assert p == 0.0 and v == 0.0
    p, _ = search_low_power(lambda x: np.asarray(x, dtype=float) * 0 + 1, 0.0, 2.0, 0.1)
    assert p == 2.0


@settings(max_examples=40, deadline=None)
@given(q1=st.floats(0.01, 15), m=st.integers(1, 30),
       curve=st.sampled_from([RAY, W83, OutageCurve.weibull(4, 1), OutageCurve.weibull(8, 0.5)]))
def test_structure_and_dominance(q1, m, curve):
    sol = solve_p3(curve, q1, m)
    check_structure(sol, curve, q1, m)
    assert sol.objective <= float(curve(q1)) + 1e-12
    assert sol.objective <= suboptimal_onoff_n1(curve, q1, m).objective + 1e-12


@pytest.mark.parametrize("curve", [RAY, W83])
def test_value_non_increasing_in_budget(curve):
    pa = thresholds(curve).p_a
    values = [solve_p3(curve, q, 7).objective for q in np.linspace(0.01, 2 * pa, 80)]
    assert np.all(np.diff(values) <= 1e-9)
