import io
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import integrate

from hyperbm.errors import DomainError
from hyperbm.geometry import halfplane_distance_array
from hyperbm.modular import (
    AREA, FDPoint, PartitionSpec, UnitTangent, _rect_area, birkhoff_averages, birkhoff_equidistribution,
    cusp_area, cusp_indicator, fit_decay_rate, geodesic_flow_reduce, mixing_tv, reduce, reduce_array,
    same_tangent, tv_distance,
)
from hyperbm.rng import RngPolicy
from hyperbm.sampler import simulate_halfplane

GENS = {
    "T": lambda z: z + 1, "t": lambda z: z - 1, "S": lambda z: -1 / z,
}


def in_F(z, eps=1e-9):
    return abs(z.real) <= 0.5 + eps and abs(z) >= 1 - eps


@pytest.mark.parametrize("z,expect,moves", [
    (0.5j, 2j, 1), (3 + 1j, 1j, 1), (0.2 + 2j, 0.2 + 2j, 0), (0.1 + 0.1j, None, None),
])
def test_reduce_examples(z, expect, moves):
    p, m = reduce(z)
    assert in_F(p.z)
    if expect is not None:
        assert p.z == pytest.approx(expect, abs=1e-14)
        assert m == moves


def test_reduce_errors_and_fdpoint():
    with pytest.raises(DomainError):
        reduce(1 - 1j)
    with pytest.raises(DomainError):
        FDPoint(0.5j)
    FDPoint(0.5 + math.sqrt(3) / 2 * 1j)


interior = st.tuples(st.floats(-0.49, 0.49), st.floats(1.0, 6.0)).map(lambda p: complex(*p)).filter(
    lambda z: abs(z) > 1.01)
words = st.lists(st.sampled_from("TtS"), min_size=1, max_size=10)


@given(interior, words)
def test_reduce_inverts_group_action(z, word):
    w = z
    for g in word:
        w = GENS[g](w)
    assume(1e-3 < w.imag < 1e3)
    p, _ = reduce(w)
    assert p.z == pytest.approx(z, rel=1e-7, abs=1e-7)
    assert reduce_array(np.array([w]))[0] == pytest.approx(p.z, abs=1e-12)


@given(st.floats(-20, 20), st.floats(1e-3, 50))
def test_reduce_idempotent_and_minimal(x, y):
    p, _ = reduce(complex(x, y))
    q, m = reduce(p.z)
    assert q.z == p.z and m == 0
    # F is the Dirichlet domain about 2i: no generator image of p is closer to 2i
    d0 = halfplane_distance_array(p.z, 2j)
    for g in GENS.values():
        assert halfplane_distance_array(g(p.z), 2j) >= d0 - 1e-9


def test_reduce_array_matches_scalar(rng):
    z = rng.uniform(-5, 5, 500) + 1j * np.exp(rng.uniform(-6, 3, 500))
    np.testing.assert_allclose(reduce_array(z), [reduce(w)[0].z for w in z], atol=1e-12)


def test_area_and_cusp_by_quadrature():
    a = integrate.dblquad(lambda y, x: 1 / y**2, -0.5, 0.5, lambda x: math.sqrt(1 - x * x), lambda x: np.inf)[0]
    assert a == pytest.approx(AREA, rel=1e-9)
    c = integrate.quad(lambda y: 1 / y**2, 2, np.inf)[0]
    assert cusp_area(2.0) == pytest.approx(c) == pytest.approx(0.5)
    assert cusp_area(2.0) / AREA == pytest.approx(3 / (2 * math.pi))
    with pytest.raises(DomainError):
        cusp_area(0.5)


@pytest.mark.parametrize("box", [(-0.5, 0.5, 0.0, 1.2), (-0.3, 0.1, 0.0, 1.0), (0.2, 0.5, 0.9, 3.0),
                                 (-0.5, -0.2, 1.5, np.inf)])
def test_rect_area_matches_dblquad(box):
    x0, x1, y0, y1 = box
    lo = lambda x: max(y0, math.sqrt(1 - x * x))
    hi = lambda x: max(lo(x), y1) if not math.isinf(y1) else np.inf
    want = integrate.dblquad(lambda y, x: 1 / y**2, x0, x1, lo, hi, epsabs=1e-12)[0]
    assert _rect_area(x0, x1, y0, y1) == pytest.approx(want, rel=1e-8, abs=1e-12)


def test_default_partition():
    p = PartitionSpec.default()
    assert p.n_cells == 20
    assert p.columns == [8, 5, 4, 2]
    np.testing.assert_allclose(p.y_edges, [math.sqrt(3) / 2, math.sqrt(2), 2, 2 * math.sqrt(2), 4], rtol=1e-15)
    assert p.areas.sum() == pytest.approx(AREA, abs=1e-14)
    assert p.areas[-1] == pytest.approx(0.25)
    # largest remainder keeps the rectangles within a factor 1.5 of each other
    rect = p.areas[:-1]
    assert rect.max() / rect.min() < 1.5


def test_partition_config_round_trip():
    p = PartitionSpec.default()
    q = PartitionSpec.from_config(p.to_config())
    assert q.y_edges == p.y_edges and q.columns == p.columns and q.y_cap == p.y_cap
    np.testing.assert_array_equal(q.areas, p.areas)
    with pytest.raises(DomainError):
        PartitionSpec([1.0, 2.0], [1, 1], 2.0)


def test_cell_frequencies_under_area_measure(rng):
    # rejection sample the hyperbolic area measure on F
    n = 400000
    x = rng.uniform(-0.5, 0.5, n)
    y = (math.sqrt(3) / 2) / rng.uniform(0, 1, n)
    z = (x + 1j * y)[x * x + y * y >= 1]
    p = PartitionSpec.default()
    cells = p.cell_index(z)
    assert cells.min() == 0 and cells.max() == p.n_cells - 1
    assert tv_distance(cells, p.weights, p.n_cells) < 0.01


def test_tv_and_decay_fit():
    w = np.array([0.5, 0.5])
    assert tv_distance(np.array([0, 0, 0, 0]), w, 2) == pytest.approx(0.5)
    assert tv_distance(np.array([0, 1]), w, 2) == 0.0
    t = np.linspace(0, 5, 11)
    assert fit_decay_rate(t, 0.8 * np.exp(-0.7 * t), 1e-6) == pytest.approx(0.7)
    assert math.isnan(fit_decay_rate(t, np.full(11, 1e-7), 1e-6))


def test_mixing_starts_at_point_mass():
    p = PartitionSpec.default()
    rep = mixing_tv([0.0, 0.5, 1.0], 300, p, rng=RngPolicy(2))
    cell = p.cell_index(np.array([1.2j]))[0]
    assert rep.tv[0] == pytest.approx(1 - p.weights[cell])
    assert rep.tv[-1] < rep.tv[0]
    buf = io.StringIO()
    rep.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "t,tv,noise_floor"
    assert len(buf.getvalue().splitlines()) == 4


def test_folded_paths_stay_in_F_and_lift_has_unit_drift():
    pol = RngPolicy(6)
    folded = simulate_halfplane(10.0, 0.01, 1.2j, 200, pol, record_every=50, fold=reduce_array)
    z = folded.states.ravel()
    assert np.all(np.abs(z.real) <= 0.5 + 1e-9) and np.all(np.abs(z) >= 1 - 1e-9)
    lift = simulate_halfplane(40.0, 0.01, 1j, 400, pol, record_every=1000)
    slope = (lift.radius_at(40.0) - lift.radius_at(20.0)).mean() / 20.0
    assert slope == pytest.approx(1.0, abs=0.05)


def test_single_path_two_cell_stationarity():
    # one quotient path sampled every unit of time; cusp Im z > 2 has mass 3/(2 pi)
    p = PartitionSpec([math.sqrt(3) / 2, 2.0], [1], 2.0)
    b = simulate_halfplane(1000.0, 0.01, 1.2j, 1, RngPolicy(17), record_every=100, fold=reduce_array)
    cells = p.cell_index(b.states[1:, 0])
    assert tv_distance(cells, p.weights, 2) <= 0.03


def test_tangent_construction():
    v = UnitTangent.at(1j, 0.0)
    assert v.basepoint == pytest.approx(1j) and v.direction == pytest.approx(1j)
    assert v.endpoint() == math.inf
    w = UnitTangent.at(2 + 3j, math.pi / 2)
    assert w.basepoint == pytest.approx(2 + 3j) and w.direction == pytest.approx(-1)
    for s in (-3.0, 0.0, 0.4, 7.5):
        u = UnitTangent.toward(0.3 + 2j, s)
        assert u.basepoint == pytest.approx(0.3 + 2j)
        assert u.endpoint() == pytest.approx(s, abs=1e-12)
    assert UnitTangent.toward(1j, math.inf).endpoint() == math.inf
    with pytest.raises(DomainError):
        UnitTangent.at(-1j, 0.0)


def test_geodesic_flow_examples():
    v = UnitTangent.at(1j, 0.0)
    assert geodesic_flow_reduce(v, math.log(2.0)).basepoint == pytest.approx(2j, abs=1e-14)
    # the downward flow from i reaches i/2, which reduces back to 2i
    down = UnitTangent.at(1j, math.pi)
    assert geodesic_flow_reduce(down, math.log(2.0)).basepoint == pytest.approx(2j, abs=1e-14)


@settings(max_examples=20)
@given(interior, st.floats(0, 2 * math.pi), st.floats(0.5, 8.0))
def test_geodesic_flow_reversible(z, angle, t):
    v = UnitTangent.at(z, angle)
    w = geodesic_flow_reduce(geodesic_flow_reduce(v, t), -t)
    assert same_tangent(v, w, tol=1e-7)


def test_long_flow_invariants():
    v = UnitTangent.at(0.1 + 1.3j, 0.77)
    w = geodesic_flow_reduce(v, 1000.0)
    assert np.linalg.det(w.g) == pytest.approx(1.0, abs=1e-9)
    assert in_F(w.basepoint)


def test_birkhoff_constant_is_one():
    starts = [UnitTangent.at(1.5j, a) for a in (0.1, 1.0, 2.0)]
    np.testing.assert_allclose(birkhoff_averages(starts, lambda z: np.ones(z.shape), 10.0), 1.0)


def test_single_generic_geodesic_equidistributes():
    v = UnitTangent.at(0.1 + 1.3j, math.sqrt(2) - 1)
    avg = birkhoff_averages([v], cusp_indicator(2.0), 1e4, ds=0.05)[0]
    assert avg == pytest.approx(3 / (2 * math.pi), abs=0.05)


def test_equidistribution_needs_unfolded_paths():
    b = simulate_halfplane(1.0, 0.01, 1j, 5, RngPolicy(0), fold=reduce_array)
    with pytest.raises(DomainError):
        birkhoff_equidistribution(b)
    b = simulate_halfplane(5.0, 0.01, 1j, 20, RngPolicy(0), record_every=100)
    rep = birkhoff_equidistribution(b, T_flow=20.0)
    assert rep.averages.shape == (20,) and 0 <= rep.mean <= 1
    assert rep.target == pytest.approx(3 / (2 * math.pi))
