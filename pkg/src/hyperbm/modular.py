"""The modular surface PSL(2, Z) \\ H^2 as a finite-volume testbed.

Points are reduced to the standard fundamental domain
F = {|Re z| <= 1/2, |z| >= 1}, of hyperbolic area pi/3.  Unit tangent vectors
are SL(2, R) matrices g: basepoint g.i, direction the image of the upward
vertical at i.  The geodesic flow is right multiplication by
diag(e^{t/2}, e^{-t/2}); reduction is left multiplication by PSL(2, Z).
"""

from __future__ import annotations

import configparser
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError
from .rng import RngPolicy
from .sampler import simulate_halfplane

AREA = math.pi / 3.0
MAX_MOVES = 10**6
_EPS = 1e-12


@dataclass(frozen=True)
class FDPoint:
    z: complex

    def __post_init__(self):
        z = complex(self.z)
        if not (z.imag > 0 and abs(z.real) <= 0.5 + _EPS and abs(z) >= 1.0 - _EPS):
            raise DomainError(f"{z} is not in the fundamental domain")


def reduce(z) -> tuple[FDPoint, int]:
    """Reduce z into F; returns the point and the number of generator moves."""
    z = complex(z)
    if not z.imag > 0:
        raise DomainError("reduce needs Im z > 0")
    moves = 0
    while True:
        n = math.floor(z.real + 0.5)
        if n:
            z -= n
            moves += 1
        if abs(z) < 1.0 - _EPS:
            z = -1.0 / z
            moves += 1
        else:
            break
        if moves > MAX_MOVES:
            raise NumericError("reduction did not terminate", z=z)
    return FDPoint(z), moves


def reduce_array(z):
    """Vectorised reduction of an array of points into F."""
    z = np.array(z, dtype=complex, copy=True)
    todo = np.ones(z.shape, bool)
    for _ in range(MAX_MOVES):
        zt = z[todo]
        zt = zt - np.floor(zt.real + 0.5)
        inv = np.abs(zt) < 1.0 - _EPS
        zt[inv] = -1.0 / zt[inv]
        z[todo] = zt
        idx = np.flatnonzero(todo)
        todo[idx[~inv]] = False
        if not todo.any():
            return z
    raise NumericError("vectorised reduction did not terminate")


def area():
    return AREA


def cusp_area(y0):
    """Area of {z in F : Im z > y0} for y0 >= 1."""
    if y0 < 1:
        raise DomainError("cusp area formula needs y0 >= 1")
    return 1.0 / y0


# ---------------------------------------------------------------------------
# partition into cells


def _rect_area(x0, x1, y0, y1):
    """Hyperbolic area of F cut to x in [x0, x1], y in [y0, y1] (y1 may be inf).

    Integrates (1/max(y0, c(x)) - 1/y1)_+ dx with c(x) = sqrt(1 - x^2).
    """
    inv1 = 0.0 if math.isinf(y1) else 1.0 / y1
    # arc c(x) exceeds y0 for |x| < sqrt(1 - y0^2); exceeds y1 for |x| < sqrt(1 - y1^2)
    def crit(y):
        return math.sqrt(1.0 - y * y) if y < 1.0 else 0.0

    k0, k1 = crit(y0), crit(y1) if not math.isinf(y1) else 0.0
    pts = sorted({x0, x1, *[p for p in (-k0, k0, -k1, k1) if x0 < p < x1]})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        m = 0.5 * (a + b)
        c = math.sqrt(1.0 - m * m)
        if c >= y1:
            continue
        if c > y0:  # lower boundary is the arc: int dx / sqrt(1-x^2) = asin
            total += (math.asin(b) - math.asin(a)) - inv1 * (b - a)
        else:
            total += (1.0 / y0 - inv1) * (b - a)
    return total


@dataclass
class PartitionSpec:
    """Rectangles in (Re z, log Im z) below y_cap plus one cusp cell Im z > y_cap.

    Row ``i`` covers y_edges[i] <= Im z < y_edges[i+1]; the first row reaches
    down to the arc |z| = 1.  Columns split [-1/2, 1/2] evenly within a row.
    """

    y_edges: list
    columns: list
    y_cap: float
    areas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.y_edges = [float(y) for y in self.y_edges]
        self.columns = [int(c) for c in self.columns]
        if len(self.columns) != len(self.y_edges) - 1 or self.y_edges[-1] != self.y_cap:
            raise DomainError("partition rows and edges do not match")
        areas = []
        for i, nc in enumerate(self.columns):
            lo = 0.0 if i == 0 else self.y_edges[i]
            xs = np.linspace(-0.5, 0.5, nc + 1)
            areas += [_rect_area(xs[j], xs[j + 1], lo, self.y_edges[i + 1]) for j in range(nc)]
        areas.append(cusp_area(self.y_cap))
        self.areas = np.array(areas)
        if abs(self.areas.sum() - AREA) > 1e-8:
            raise NumericError("partition areas do not add up to pi/3", total=float(self.areas.sum()))

    @property
    def n_cells(self):
        return self.areas.size

    @property
    def weights(self):
        return self.areas / AREA

    @classmethod
    def default(cls, n_rect=19, y_cap=4.0, n_rows=4):
        """Rows log-spaced on [1, y_cap]; columns allotted by largest remainder to equalise cell areas."""
        edges = list(np.geomspace(1.0, y_cap, n_rows + 1))
        edges[0] = math.sqrt(3.0) / 2.0
        row_area = [(_rect_area(-0.5, 0.5, 0.0 if i == 0 else edges[i], edges[i + 1])) for i in range(n_rows)]
        share = np.array(row_area) / sum(row_area) * n_rect
        cols = np.maximum(np.floor(share).astype(int), 1)
        while cols.sum() < n_rect:
            cols[np.argmax(share - cols)] += 1
        while cols.sum() > n_rect:
            cols[np.argmax(cols - share)] -= 1
        return cls(edges, cols.tolist(), y_cap)

    def cell_index(self, z):
        """Cell of each reduced point (vectorised)."""
        z = np.asarray(z, dtype=complex)
        y, x = z.imag, z.real
        row = np.clip(np.searchsorted(self.y_edges, y, side="right") - 1, 0, len(self.columns) - 1)
        cols = np.array(self.columns)
        offsets = np.concatenate([[0], np.cumsum(cols)])
        nc = cols[row]
        col = np.clip(np.floor((x + 0.5) * nc).astype(int), 0, nc - 1)
        idx = offsets[row] + col
        return np.where(y >= self.y_cap, self.n_cells - 1, idx)

    def to_config(self, section="partition"):
        cp = configparser.ConfigParser()
        cp[section] = {
            "y_edges": ", ".join(repr(y) for y in self.y_edges),
            "columns": ", ".join(str(c) for c in self.columns),
            "y_cap": repr(self.y_cap),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_config(cls, text, section="partition"):
        cp = configparser.ConfigParser()
        cp.read_string(text)
        s = cp[section]
        return cls(
            [float(v) for v in s["y_edges"].split(",")],
            [int(v) for v in s["columns"].split(",")],
            float(s["y_cap"]),
        )


# ---------------------------------------------------------------------------
# mixing


@dataclass
class MixingReport:
    times: np.ndarray
    tv: np.ndarray
    noise_floor: float
    n_paths: int
    start: complex
    fitted_rate: float

    def to_csv(self, fh):
        w = csv.writer(fh)
        w.writerow(["t", "tv", "noise_floor"])
        for t, v in zip(self.times, self.tv):
            w.writerow([repr(float(t)), repr(float(v)), repr(self.noise_floor)])

    def monotone(self, t_from=2.0, slack=None):
        """TV non-increasing on t >= t_from, up to ``slack`` (default: twice the noise floor)."""
        slack = 2.0 * self.noise_floor if slack is None else slack
        v = self.tv[self.times >= t_from - 1e-12]
        return bool(np.all(np.diff(v) <= slack))


def tv_distance(cells, weights, n_cells):
    counts = np.bincount(cells, minlength=n_cells)
    return 0.5 * float(np.abs(counts / counts.sum() - weights).sum())


def fit_decay_rate(times, tv, floor):
    """Slope of -log(TV) over the points well above the noise floor."""
    keep = (tv > 2.0 * floor) & (times > 0)
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(times[keep], np.log(tv[keep]), 1)[0]
    return float(-slope)


def mixing_tv(t_grid, n_paths, partition: PartitionSpec = None, start=None, dt=0.01, rng: RngPolicy = None,
              workers=1) -> MixingReport:
    """TV distance between the cell law of reduced Brownian motion and normalised area."""
    partition = partition or PartitionSpec.default()
    start = FDPoint(1.2j) if start is None else start
    t_grid = np.asarray(t_grid, dtype=float)
    rng = rng or RngPolicy(0)
    steps = np.round(t_grid / dt).astype(int)
    every = int(np.gcd.reduce(steps[steps > 0])) if np.any(steps > 0) else 1
    batch = simulate_halfplane(float(t_grid.max()), dt, start.z, n_paths, rng, record_every=every,
                               workers=workers, fold=reduce_array)
    tv = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        z = batch.states[batch.index_of(t)]
        tv[i] = tv_distance(partition.cell_index(z), partition.weights, partition.n_cells)
    floor = math.sqrt(partition.n_cells / n_paths) / 2.0
    return MixingReport(t_grid, tv, floor, n_paths, start.z, fit_decay_rate(t_grid, tv, floor))


# ---------------------------------------------------------------------------
# geodesic flow on the unit tangent bundle


_T = np.array([[1.0, 1.0], [0.0, 1.0]])
_S = np.array([[0.0, -1.0], [1.0, 0.0]])


def _mobius(g, z):
    return (g[..., 0, 0] * z + g[..., 0, 1]) / (g[..., 1, 0] * z + g[..., 1, 1])


@dataclass(frozen=True, eq=False)
class UnitTangent:
    """Unit tangent vector on H^2 stored as g in SL(2, R)."""

    g: np.ndarray

    @classmethod
    def at(cls, z, angle):
        """Vector at z making ``angle`` (radians, counter-clockwise) with the upward vertical."""
        z = complex(z)
        if not z.imag > 0:
            raise DomainError("basepoint must be in the upper half-plane")
        sy = math.sqrt(z.imag)
        n_a = np.array([[sy, z.real / sy], [0.0, 1.0 / sy]])
        # the rotation k_phi turns the vertical at i by -2 phi
        phi = -angle / 2.0
        k = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        return cls(n_a @ k)

    @classmethod
    def toward(cls, z, s):
        """Vector at z pointing along the geodesic to the boundary point s (real or inf)."""
        z = complex(z)
        if math.isinf(s):
            return cls.at(z, 0.0)
        # move z to i, find the image of s, rotate so that infinity goes there
        sy = math.sqrt(z.imag)
        n_a = np.array([[sy, z.real / sy], [0.0, 1.0 / sy]])
        s1 = (s - z.real) / z.imag
        # k = [[c, -s], [s, c]] sends infinity to cot(phi)
        phi = math.atan2(1.0, s1)
        k = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        return cls(n_a @ k)

    @property
    def basepoint(self):
        return complex(_mobius(self.g, 1j))

    @property
    def direction(self):
        """Unit direction as a complex number in the Euclidean picture at the basepoint."""
        c, d = self.g[1, 0], self.g[1, 1]
        w = 1j / (c * 1j + d) ** 2
        return complex(w / abs(w))

    def endpoint(self):
        """Forward boundary point g(inf)."""
        c = self.g[1, 0]
        return math.inf if c == 0 else float(self.g[0, 0] / c)


def _reduce_matrices(g):
    """Left-multiply each g by PSL(2, Z) until g.i lies in F (vectorised over leading axis)."""
    g = np.array(g, dtype=float, copy=True)
    for _ in range(MAX_MOVES):
        z = _mobius(g, 1j)
        n = np.floor(z.real + 0.5)
        if np.any(n != 0):
            # T^{-n} g
            g[:, 0, 0] -= n * g[:, 1, 0]
            g[:, 0, 1] -= n * g[:, 1, 1]
            z = z - n
        inv = np.abs(z) < 1.0 - _EPS
        if not inv.any():
            return g
        gi = g[inv]
        g[inv] = np.stack([-gi[:, 1], gi[:, 0]], axis=1)  # S g
    raise NumericError("flow reduction did not terminate")


def _normalise_det(g):
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    return g / np.sqrt(det)[:, None, None]


def flow_matrices(g, t):
    """Geodesic flow for time t (exact), then reduction; g has shape (N, 2, 2)."""
    a = np.array([[math.exp(t / 2.0), 0.0], [0.0, math.exp(-t / 2.0)]])
    return _reduce_matrices(np.asarray(g) @ a)


def geodesic_flow_reduce(v: UnitTangent, t, max_step=1.0) -> UnitTangent:
    """Flow v for time t on the quotient, reducing whenever the basepoint leaves F."""
    g = v.g[None]
    n = max(1, int(math.ceil(abs(t) / max_step)))
    for _ in range(n):
        g = _normalise_det(flow_matrices(g, t / n))
    return UnitTangent(g[0])


def same_tangent(u: UnitTangent, v: UnitTangent, tol=1e-9):
    """Equality in PSL(2, R) (g and -g are the same vector)."""
    return bool(np.allclose(u.g, v.g, atol=tol, rtol=0) or np.allclose(u.g, -v.g, atol=tol, rtol=0))


def birkhoff_averages(starts, phi, T_flow, ds=0.02):
    """Time averages of phi(basepoint) along the quotient geodesic flow, one per start vector.

    ``phi`` maps an array of reduced basepoints to values.  The flow is exact;
    the time integral is a midpoint Riemann sum with step ds.
    """
    g = np.stack([v.g for v in starts])
    n = int(round(T_flow / ds))
    g = _normalise_det(flow_matrices(g, ds / 2.0))
    acc = np.zeros(len(starts))
    a = np.array([[math.exp(ds / 2.0), 0.0], [0.0, math.exp(-ds / 2.0)]])
    for step in range(n):
        acc += phi(_mobius(g, 1j))
        g = _reduce_matrices(g @ a)
        if step % 64 == 63:
            g = _normalise_det(g)
    return acc / n


def cusp_indicator(y0=2.0):
    return lambda z: (np.asarray(z).imag > y0).astype(float)


@dataclass
class EquidistributionReport:
    averages: np.ndarray
    low_confidence: np.ndarray
    mean: float
    std_error: float
    target: float


def birkhoff_equidistribution(batch, phi=None, T_flow=1000.0, ds=0.02, target=None) -> EquidistributionReport:
    """Flow from each path's start towards its boundary limit and time-average phi.

    ``batch`` must be an unfolded half-plane batch started at a point of F.
    """
    from .sampler import Scheme, boundary_limit

    if batch.scheme is not Scheme.HALFPLANE or batch.meta.get("folded"):
        raise DomainError("equidistribution needs unfolded half-plane paths")
    phi = phi or cusp_indicator(2.0)
    est = boundary_limit(batch)
    z0 = complex(batch.meta.get("z0", 1j))
    starts = [UnitTangent.toward(z0, float(s)) for s in est.halfplane_x]
    avg = birkhoff_averages(starts, phi, T_flow, ds)
    se = float(avg.std(ddof=1) / math.sqrt(avg.size)) if avg.size > 1 else float("nan")
    if target is None:
        target = 1.5 / math.pi  # cusp Im z > 2 has area 1/2 of pi/3
    return EquidistributionReport(avg, est.low_confidence, float(avg.mean()), se, target)
