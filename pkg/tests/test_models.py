import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperbm.errors import DomainError, ParameterError, UnsupportedModelError
from hyperbm.models import (
    ConstantCurvature, PolarPoint, RotSym, angular_rate, pinched_profile, radial_drift, rotsym_distance,
    sphere_area, volume_density, warp_grid,
)


@pytest.fixture(scope="module")
def hyperbolic_rotsym():
    r, f = warp_grid(lambda r: 1.0, r_max=40.0)
    return RotSym(r, f, 1.0, 1.0)


@pytest.fixture(scope="module")
def pinched():
    r, f = warp_grid(pinched_profile(1.0, 1.5), r_max=60.0)
    return RotSym(r, f, 1.0, 1.5)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("d,a", [(2, 1.0), (3, 1.0), (4, 0.5), (3, 2.0)])
def test_constant_curvature_polar_data(d, a):
    m = ConstantCurvature(d, a)
    r = np.array([0.1, 1.0, 5.0, 30.0])
    np.testing.assert_allclose(volume_density(m, r), (np.sinh(a * r) / a) ** (d - 1), rtol=1e-14)
    np.testing.assert_allclose(radial_drift(m, r), (d - 1) * a / np.tanh(a * r), rtol=1e-14)
    np.testing.assert_allclose(angular_rate(m, r), (a / np.sinh(a * r)) ** 2, rtol=1e-14)
    np.testing.assert_allclose(m.regular_drift(r), radial_drift(m, r) - (d - 1) / r, rtol=1e-10, atol=1e-15)
    # log form survives where sinh overflows
    assert m.log_volume_density(800.0) == pytest.approx((d - 1) * (a * 800 - math.log(2 * a)), rel=1e-12)


def test_regular_drift_small_r_series():
    m = ConstantCurvature(3, 1.0)
    r = np.array([1e-8, 1e-4, 5e-3])
    np.testing.assert_allclose(m.regular_drift(r), 2 * (r / 3 - r**3 / 45), rtol=1e-8)


def test_constant_curvature_errors():
    with pytest.raises(ParameterError):
        ConstantCurvature(1, 1.0)
    with pytest.raises(ParameterError):
        ConstantCurvature(3, 0.0)
    m = ConstantCurvature()
    with pytest.raises(DomainError):
        m.radial_drift(0.0)
    with pytest.raises(DomainError):
        m.volume_density(-1.0)


def test_warp_grid_matches_sinh(hyperbolic_rotsym):
    r = np.linspace(0.0, 20.0, 401)
    np.testing.assert_allclose(hyperbolic_rotsym.warp(r), np.sinh(r), rtol=1e-6, atol=1e-12)
    rr = r[1:]
    np.testing.assert_allclose(hyperbolic_rotsym.radial_drift(rr), 1 / np.tanh(rr), rtol=1e-6)
    np.testing.assert_allclose(hyperbolic_rotsym.curvature(rr[rr > 0.5]), -1.0, atol=1e-4)


def test_rotsym_interpolant_far_out(hyperbolic_rotsym):
    # the log-spline keeps relative accuracy across the exponential range
    assert hyperbolic_rotsym.log_warp(39.0) == pytest.approx(39.0 - math.log(2.0), rel=1e-9)


def test_pinching_validator_rejects_too_curved():
    r, f = warp_grid(lambda r: 2.0, r_max=10.0)
    with pytest.raises(ParameterError, match="pinching"):
        RotSym(r, f, 1.0, 1.5)
    RotSym(r, f, 1.0, 2.0)


def test_rotsym_grid_validation():
    r = np.linspace(0, 1, 20)
    with pytest.raises(ParameterError):
        RotSym(r, np.sinh(r)[:-1], 1.0, 1.0)
    with pytest.raises(ParameterError):
        RotSym(r + 0.1, np.sinh(r + 0.1), 1.0, 1.0)
    with pytest.raises(ParameterError):
        RotSym(r, 2 * np.sinh(r), 1.0, 2.0)  # f'(0) = 2
    with pytest.raises(ParameterError):
        RotSym(r, np.sinh(r), 2.0, 1.0)


def test_rotsym_domain(hyperbolic_rotsym):
    with pytest.raises(DomainError):
        hyperbolic_rotsym.warp(41.0)
    with pytest.raises(DomainError):
        hyperbolic_rotsym.radial_drift(0.0)


def test_pinched_curvature_and_rauch_sandwich(pinched):
    assert -1.5**2 - 1e-3 <= pinched.pinching["K_min"] <= pinched.pinching["K_max"] <= -1.0 + 1e-3
    r = np.linspace(0.05, 59.0, 2000)
    assert pinched.sandwich_violation(r) < 1e-6
    assert pinched.pinching["max_abs_dK"] > 0


def test_warp_file_round_trip(tmp_path, pinched):
    path = tmp_path / "warp.txt"
    pinched.save(path)
    m = RotSym.from_file(path, 1.0, 1.5)
    r = np.linspace(0.0, 50.0, 101)
    np.testing.assert_array_equal(m.warp(r), pinched.warp(r))
    bad = tmp_path / "bad.txt"
    np.savetxt(bad, np.ones((10, 3)))
    with pytest.raises(ParameterError):
        RotSym.from_file(bad, 1.0, 1.0)


def _cosine_law(r1, r2, gap):
    c = math.cosh(r1) * math.cosh(r2) - math.sinh(r1) * math.sinh(r2) * math.cos(gap)
    return math.acosh(max(c, 1.0))


@settings(max_examples=25)
@given(st.floats(0.05, 6.0), st.floats(0.05, 6.0), st.floats(0.0, 2 * math.pi))
def test_rotsym_distance_matches_cosine_law(hyperbolic_rotsym, r1, r2, theta):
    got = rotsym_distance(hyperbolic_rotsym, PolarPoint(r1, 0.0), PolarPoint(r2, theta))
    assert got == pytest.approx(_cosine_law(r1, r2, theta), rel=1e-5, abs=1e-7)


def test_rotsym_distance_special_cases(hyperbolic_rotsym):
    m = hyperbolic_rotsym
    assert rotsym_distance(m, PolarPoint(1.0, 0.3), PolarPoint(4.0, 0.3)) == pytest.approx(3.0)
    for tiny in (5e-324, 2.2250738585072014e-308, 1e-300):
        assert rotsym_distance(m, PolarPoint(1.0, 0.0), PolarPoint(2.0, tiny)) == pytest.approx(1.0)
    assert rotsym_distance(m, PolarPoint(0.0), PolarPoint(2.5, 1.0)) == pytest.approx(2.5)
    assert rotsym_distance(m, PolarPoint(1.0, 0.0), PolarPoint(2.0, math.pi)) == pytest.approx(3.0)
    with pytest.raises(UnsupportedModelError):
        rotsym_distance(ConstantCurvature(2), PolarPoint(1.0), PolarPoint(2.0))
    with pytest.raises(DomainError):
        PolarPoint(-1.0)


def test_rotsym_distance_pinched_between_comparisons(pinched):
    # more curvature spreads rays faster: at least the curvature -1 value, at most the path via the pole
    p, q = PolarPoint(3.0, 0.0), PolarPoint(3.0, 1.0)
    d = rotsym_distance(pinched, p, q)
    assert d <= 6.0
    assert d >= _cosine_law(3.0, 3.0, 1.0) - 1e-6
