import numpy as np
import pytest

from ehoutage.errors import DomainError, ResourceError
from ehoutage.fading import OutageCurve
from ehoutage.offline import EhTrace, validate_profile
from ehoutage.oracle import brute_force_p1, brute_force_p3

RAY = OutageCurve.rayleigh(1)


def test_p3_zero_budget():
    r = brute_force_p3(RAY, 0.0, 3, 1e-3)
    assert np.all(r.profile == 0) and r.objective == 1.0


def test_p3_convex_region_uniform():
    r = brute_force_p3(RAY, 2.0, 2, 1e-3)
    assert np.allclose(r.profile, [2.0, 2.0])
    assert r.objective == pytest.approx(0.3934693402873666, abs=1e-12)


def test_p3_beats_uniform_below_pa():
    r = brute_force_p3(RAY, 0.35, 4, 1e-3)
    uniform = float(RAY(0.35))
    assert r.objective <= uniform - 1e-3
    assert np.allclose(r.profile, [0, 0, 0, 1.4])
    assert r.objective == pytest.approx(0.8776145851107617, abs=1e-12)


@pytest.mark.parametrize("q1, m", [(0.35, 3), (0.8, 4), (1.3, 3), (0.2, 5)])
def test_dp_matches_enumeration(q1, m):
    a = brute_force_p3(RAY, q1, m, 0.02, method="dp")
    b = brute_force_p3(RAY, q1, m, 0.02, method="enumerate")
    assert a.objective == pytest.approx(b.objective, abs=1e-12)


def test_p3_limits():
    with pytest.raises(DomainError):
        brute_force_p3(RAY, 1.0, 7, 1e-2)
    with pytest.raises(ResourceError):
        brute_force_p3(RAY, 1.0, 6, 1e-4, work_cap=1000)
    with pytest.raises(ResourceError):
        brute_force_p3(RAY, 1.0, 4, 1e-3, work_cap=10, method="enumerate")
    with pytest.raises(DomainError):
        brute_force_p3(RAY, 1.0, 3, 1e-2, method="bogus")


def test_p1_single_block():
    r = brute_force_p1(RAY, EhTrace([1.0], 1), 1e-2)
    assert np.allclose(r.profile, [[1.0]])


def test_p1_rising_trace():
    r = brute_force_p1(RAY, EhTrace([1, 3], 1), 1e-2)
    assert r.objective == pytest.approx(0.4577946241273842, abs=1e-12)


def test_p1_canonical_order():
    tr = EhTrace([3, 1], 1)
    r = brute_force_p1(RAY, tr, 1e-2)
    assert np.all(np.diff(r.profile.ravel()) >= 0)
    assert np.allclose(r.profile.ravel(), [2, 2])
    # reordering a feasible optimum leaves the objective unchanged
    assert float(np.mean(RAY(r.profile[::-1]))) == pytest.approx(r.objective)


@pytest.mark.parametrize("rates, m", [([0.2, 0.2, 2.0], 1), ([0.5, 0.1], 3), ([1.2, 0, 0.4], 2), ([0, 0], 2)])
def test_p1_outputs_validate(rates, m):
    tr = EhTrace(rates, m)
    r = brute_force_p1(RAY, tr, 1e-2)
    assert validate_profile(r.profile, tr).clean


def test_p1_limits():
    with pytest.raises(DomainError):
        brute_force_p1(RAY, EhTrace([1] * 5, 2), 1e-2)
    with pytest.raises(ResourceError):
        brute_force_p1(RAY, EhTrace([1] * 3, 3), 1e-3, work_cap=100)
