import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyperbm.errors import DomainError, NormalizationError, ParameterError
from hyperbm.geometry import (
    BoundaryPoint, HPoint, HTangent, boundary_of_ray, busemann, distance, exp_map, geodesic_velocity,
    gromov_product, halfplane_boundary, halfplane_distance_array, halfplane_to_hyperboloid,
    hyperboloid_to_halfplane, log_map, minkowski, visual_distance,
)

from conftest import unit

coord = st.floats(-1.0, 1.0, allow_nan=False)
direction3 = st.lists(coord, min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1)
curv = st.floats(0.5, 2.0)
length = st.floats(0.0, 6.0)


def shoot(u, t, a=1.0):
    return exp_map(HPoint.origin(len(u), a), HTangent.at_origin(u, a), t)


def random_point(rng, d=3, a=1.0, rmax=3.0):
    return shoot(unit(rng, d), rng.uniform(0, rmax), a)


def random_tangent(rng, x: HPoint):
    """Unit tangent at x: project a random ambient vector and normalise."""
    a = x.curvature_a
    w = rng.normal(size=x.coords.size)
    w = w + a**2 * minkowski(x.coords, w) * x.coords
    return HTangent(x, w).normalized()


# -- mpmath oracles ------------------------------------------------------------

mp.mp.dps = 60


def mp_mink(u, v):
    return -u[0] * v[0] + mp.fsum(ui * vi for ui, vi in zip(u[1:], v[1:]))


def mp_vec(x):
    return [mp.mpf(float(c)) for c in x]


def mp_dist(x, y, a):
    return mp.acosh(-(a**2) * mp_mink(x, y)) / a


def mp_far_point(xi, s, a):
    """Point at distance s from the origin on the ray towards xi."""
    u = xi[1:]
    return [mp.cosh(a * s) / a] + [mp.sinh(a * s) / a * c for c in u]


# -- distance -----------------------------------------------------------------


def test_distance_identity_and_arclength():
    o = HPoint.origin(3)
    assert distance(o, o) == 0.0
    e1 = HTangent.at_origin([1, 0, 0])
    for t in (0.5, 1.0, 2.0):
        assert distance(o, exp_map(o, e1, t)) == pytest.approx(t, rel=1e-13)


@given(direction3, direction3, length, length, curv)
def test_distance_matches_law_of_cosines(u1, u2, t1, t2, a):
    o = HPoint.origin(3, a)
    p = exp_map(o, HTangent.at_origin(u1, a), t1)
    q = exp_map(o, HTangent.at_origin(u2, a), t2)
    n1, n2 = np.linalg.norm(u1), np.linalg.norm(u2)
    cos = mp.mpf(float(np.dot(u1, u2) / (n1 * n2)))
    ch = mp.cosh(a * t1) * mp.cosh(a * t2) - mp.sinh(a * t1) * mp.sinh(a * t2) * cos
    expected = float(mp.acosh(max(ch, 1)) / a)
    assert distance(p, q) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_distance_far_and_near_is_stable():
    o = HPoint.origin(3)
    e1 = HTangent.at_origin([1, 0, 0])
    assert distance(o, exp_map(o, e1, 300.0)) == pytest.approx(300.0, rel=1e-12)
    assert distance(o, exp_map(o, e1, 1e-9)) == pytest.approx(1e-9, rel=1e-6)


def test_curvature_mismatch_raises():
    with pytest.raises(ParameterError):
        distance(HPoint.origin(2, 1.0), HPoint.origin(2, 2.0))


def test_off_sheet_point_raises():
    with pytest.raises(DomainError):
        HPoint(np.array([1.0, 0.5, 0.0]))
    with pytest.raises(DomainError):
        HPoint(np.array([-1.0, 0.0, 0.0]))


# -- exp map ------------------------------------------------------------------


def test_exp_map_zero_time_and_arclength(rng):
    x = random_point(rng)
    v = random_tangent(rng, x)
    assert exp_map(x, v, 0.0) is x
    assert distance(x, exp_map(x, v, 3.7)) == pytest.approx(3.7, rel=1e-10)


def test_exp_map_rejects_non_unit(rng):
    x = random_point(rng)
    v = random_tangent(rng, x)
    with pytest.raises(NormalizationError):
        exp_map(x, HTangent(x, 2.0 * v.vec), 1.0)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0), st.floats(0.0, 3.0), curv)
def test_exp_map_flow_property(seed, s, t, a):
    # base points within a*r <= 1 so rounding in the tangent projection is not amplified by e^{a r}
    rng = np.random.default_rng(seed)
    x = random_point(rng, 3, a, 1.0 / a)
    v = random_tangent(rng, x)
    direct = exp_map(x, v, s + t)
    y = exp_map(x, v, s)
    two_step = exp_map(y, geodesic_velocity(x, v, s), t)
    assert distance(direct, two_step) <= 1e-9 * max(1.0, s + t)


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 8.0))
def test_log_map_recovers_direction(seed, t):
    rng = np.random.default_rng(seed)
    x = random_point(rng, 3)
    v = random_tangent(rng, x)
    w, dist = log_map(x, exp_map(x, v, t))
    assert dist == pytest.approx(t, rel=1e-9)
    assert np.max(np.abs(w.vec - v.vec)) <= 1e-8 * max(1.0, np.abs(v.vec).max())


# -- Busemann -----------------------------------------------------------------


def test_busemann_trivial_cases(rng):
    x = random_point(rng)
    xi = BoundaryPoint.from_unit(unit(rng, 3))
    assert busemann(x, x, xi) == pytest.approx(0.0, abs=1e-14)
    v = random_tangent(rng, x)
    y = exp_map(x, v, 2.5)
    assert busemann(y, x, boundary_of_ray(v)) == pytest.approx(-2.5, rel=1e-10)


@pytest.mark.parametrize("a", [1.0, 0.7, 1.6])
def test_busemann_matches_distance_limit(rng, a):
    for _ in range(20):
        x = random_point(rng, 3, a)
        y = random_point(rng, 3, a)
        xi = BoundaryPoint.from_unit(unit(rng, 3))
        z = mp_far_point(mp_vec(xi.direction), mp.mpf(10) ** 4, a)
        expected = mp_dist(mp_vec(y.coords), z, a) - mp_dist(mp_vec(x.coords), z, a)
        assert busemann(y, x, xi) == pytest.approx(float(expected), abs=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_busemann_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    x, y, yp = (random_point(rng, 3, 1.0, 5.0) for _ in range(3))
    xi = BoundaryPoint.from_unit(unit(rng, 3))
    assert abs(busemann(y, x, xi) - busemann(yp, x, xi)) <= distance(y, yp) + 1e-9


# -- Gromov product and visual distance -------------------------------------


def test_gromov_zero_on_geodesic_through_x(rng):
    x = random_point(rng)
    v = random_tangent(rng, x)
    xi = boundary_of_ray(v)
    eta = boundary_of_ray(HTangent(x, -v.vec))
    assert gromov_product(xi, eta, x) == pytest.approx(0.0, abs=1e-10)


def test_gromov_matches_finite_point_limit(rng):
    s = mp.mpf(10) ** 4
    for a in (1.0, 1.3):
        for _ in range(15):
            x = random_point(rng, 3, a)
            xi = BoundaryPoint.from_unit(unit(rng, 3))
            eta = BoundaryPoint.from_unit(unit(rng, 3))
            z = mp_far_point(mp_vec(xi.direction), s, a)
            w = mp_far_point(mp_vec(eta.direction), s, a)
            xm = mp_vec(x.coords)
            brute = (mp_dist(xm, z, a) + mp_dist(xm, w, a) - mp_dist(z, w, a)) / 2
            assert gromov_product(xi, eta, x) == pytest.approx(float(brute), abs=1e-5)


def test_gromov_cocycle_identity(rng):
    for _ in range(100):
        x, y = random_point(rng), random_point(rng)
        xi = BoundaryPoint.from_unit(unit(rng, 3))
        eta = BoundaryPoint.from_unit(unit(rng, 3))
        lhs = gromov_product(xi, eta, x) - gromov_product(xi, eta, y)
        rhs = 0.5 * busemann(x, y, xi) + 0.5 * busemann(x, y, eta)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_gromov_nonnegative_and_blows_up(rng):
    x = HPoint.origin(2)
    xi = halfplane_boundary(0.0)
    vals = [gromov_product(xi, halfplane_boundary(e), x) for e in (1.0, 1e-2, 1e-4, 1e-6)]
    assert all(v >= 0 for v in vals)
    assert np.all(np.diff(vals) > 0) and vals[-1] > 13.0
    with pytest.raises(DomainError):
        gromov_product(xi, xi, x)


def test_visual_distance_basic_laws():
    x = HPoint.origin(2)
    xi, eta = halfplane_boundary(-1.0), halfplane_boundary(1.0)  # antipodal seen from i
    assert visual_distance(xi, eta, x, 0.4) == pytest.approx(1.0)
    xi, eta = halfplane_boundary(0.3), halfplane_boundary(2.0)
    assert visual_distance(xi, eta, x, 0.8) == pytest.approx(visual_distance(xi, eta, x, 0.4) ** 2)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert visual_distance(xi, xi, x) == 0.0
        assert w
    with pytest.raises(ParameterError):
        visual_distance(xi, eta, x, -1.0)


@pytest.mark.parametrize("a", [1.0, 1.5])
def test_visual_distance_quasi_ultrametric(rng, a):
    """d(xi, zeta) <= C max(d(xi, eta), d(eta, zeta)) with C = exp(tau delta), delta = log 2 / a."""
    tau = a / 2.0
    C = math.exp(tau * math.log(2.0) / a)
    for _ in range(1000):
        x = random_point(rng, 3, a)
        xi, eta, zeta = (BoundaryPoint.from_unit(unit(rng, 3)) for _ in range(3))
        lhs = visual_distance(xi, zeta, x, tau)
        rhs = C * max(visual_distance(xi, eta, x, tau), visual_distance(eta, zeta, x, tau))
        assert lhs <= rhs * (1 + 1e-12)


# -- half-plane chart -------------------------------------------------------


def test_halfplane_chart_examples():
    o = halfplane_to_hyperboloid(1j)
    assert np.allclose(o.coords, [1.0, 0.0, 0.0])
    assert distance(o, halfplane_to_hyperboloid(2j)) == pytest.approx(math.log(2.0), rel=1e-14)
    b = busemann(halfplane_to_hyperboloid(2j), o, halfplane_boundary(math.inf))
    assert b == pytest.approx(-math.log(2.0), rel=1e-14)


@given(st.floats(-50, 50), st.floats(1e-3, 1e3), st.floats(-50, 50), st.floats(1e-3, 1e3))
def test_halfplane_distance_agrees_with_hyperboloid(x1, y1, x2, y2):
    z, w = complex(x1, y1), complex(x2, y2)
    p, q = halfplane_to_hyperboloid(z), halfplane_to_hyperboloid(w)
    d_hp = float(halfplane_distance_array(z, w))
    assert distance(p, q) == pytest.approx(d_hp, rel=1e-8, abs=1e-8)
    assert hyperboloid_to_halfplane(p) == pytest.approx(z, rel=1e-10)


@given(st.floats(-10, 10))
def test_halfplane_boundary_is_null_and_matches_busemann(s):
    # hyperboloid coordinates of s + i grow like s^2, so <y, xi> cancels; keep |s| moderate
    xi = halfplane_boundary(s)
    assert abs(minkowski(xi.direction, xi.direction)) < 1e-12
    # vertical geodesic above s ends at infinity; from s + i towards s the Busemann slope is -1
    y1, y2 = halfplane_to_hyperboloid(complex(s, 1.0)), halfplane_to_hyperboloid(complex(s, 0.5))
    assert busemann(y2, y1, xi) == pytest.approx(-math.log(2.0), rel=1e-9)
