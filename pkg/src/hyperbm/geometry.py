"""Geometry of H^d(-a^2) in the hyperboloid model, plus the upper half-plane chart for d = 2.

Points live on the upper sheet ``<x, x>_M = -1/a^2`` of Minkowski space with
``<u, v>_M = -u0 v0 + sum_i ui vi``.  Boundary points are future null vectors
normalised to ``xi0 = 1``.

Every public function on the dataclasses has an array twin (suffix ``_array``)
working on ``(..., d+1)`` coordinate arrays; the samplers and estimators use
those.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NormalizationError, ParameterError

SHEET_TOL = 1e-10
UNIT_TOL = 1e-10


def minkowski(u, v):
    """Minkowski form along the last axis."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return -u[..., 0] * v[..., 0] + np.sum(u[..., 1:] * v[..., 1:], axis=-1)


def to_sheet(x, a):
    """Exact reprojection: keep the spatial part, recompute x0.

    Solving for x0 (instead of rescaling) keeps full relative precision when the
    point is far from the origin and the Minkowski norm suffers cancellation.
    """
    x = np.array(x, dtype=float, copy=True)
    x[..., 0] = np.sqrt(1.0 / a**2 + np.sum(x[..., 1:] ** 2, axis=-1))
    return x


def origin(d, a=1.0):
    o = np.zeros(d + 1)
    o[0] = 1.0 / a
    return o


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class HPoint:
    coords: np.ndarray
    curvature_a: float = 1.0

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        if self.curvature_a <= 0:
            raise ParameterError("curvature parameter a must be positive")
        if c.ndim != 1 or c.size < 3:
            raise ParameterError("HPoint needs a (d+1)-vector with d >= 2")
        if c[0] <= 0:
            raise DomainError("point is not on the upper sheet")
        a2 = self.curvature_a**2
        # relative to the size of the coordinates: the form cancels for far points
        scale = max(1.0, a2 * float(c[0]) ** 2)
        if abs(a2 * minkowski(c, c) + 1.0) > SHEET_TOL * scale:
            raise DomainError("point violates <x,x>_M = -1/a^2")

    @property
    def dim(self):
        return self.coords.size - 1

    @classmethod
    def origin(cls, d, a=1.0):
        return cls(origin(d, a), a)

    @classmethod
    def project(cls, coords, a=1.0):
        """Build a point from approximate coordinates by reprojecting onto the sheet."""
        return cls(to_sheet(coords, a), a)


@dataclass(frozen=True, eq=False)
class HTangent:
    base: HPoint
    vec: np.ndarray

    def __post_init__(self):
        v = np.array(self.vec, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vec", v)
        if v.shape != self.base.coords.shape:
            raise ParameterError("tangent vector has wrong dimension")
        x = self.base.coords
        scale = max(1.0, float(np.abs(x).max() * np.abs(v).max()))
        if abs(minkowski(x, v)) > UNIT_TOL * scale:
            raise DomainError("vector is not tangent to the sheet at its base point")

    @property
    def norm(self):
        return math.sqrt(max(float(minkowski(self.vec, self.vec)), 0.0))

    def is_unit(self, tol=UNIT_TOL):
        return abs(float(minkowski(self.vec, self.vec)) - 1.0) <= tol

    def normalized(self):
        n = self.norm
        if n == 0:
            raise NormalizationError("zero tangent vector")
        return HTangent(self.base, self.vec / n)

    @classmethod
    def at_origin(cls, direction, a=1.0):
        """Unit tangent at the origin pointing along the Euclidean direction ``direction``."""
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        return cls(HPoint.origin(u.size, a), np.concatenate([[0.0], u]))


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    direction: np.ndarray

    def __post_init__(self):
        xi = np.array(self.direction, dtype=float)
        if xi[0] <= 0:
            raise DomainError("boundary point must be future directed")
        xi = xi / xi[0]
        xi.setflags(write=False)
        object.__setattr__(self, "direction", xi)
        if abs(minkowski(xi, xi)) > 1e-10:
            raise DomainError("boundary direction is not null")

    @property
    def dim(self):
        return self.direction.size - 1

    @classmethod
    def from_unit(cls, u):
        """Endpoint of the ray from the origin in Euclidean direction ``u``."""
        u = np.asarray(u, dtype=float)
        return cls(np.concatenate([[1.0], u / np.linalg.norm(u)]))

    def __eq__(self, other):
        if not isinstance(other, BoundaryPoint):
            return NotImplemented
        return np.allclose(self.direction, other.direction, rtol=0, atol=1e-14)

    __hash__ = None


def _same_a(*points):
    a = points[0].curvature_a
    for p in points[1:]:
        if p.curvature_a != a:
            raise ParameterError(f"curvature mismatch: {a} vs {p.curvature_a}")
    return a


# ---------------------------------------------------------------------------
# array kernels


def distance_array(x, y, a=1.0):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = -(a**2) * minkowski(x, y)
    diff = x - y
    q = np.maximum(minkowski(diff, diff), 0.0)
    near = (2.0 / a) * np.arcsinh(0.5 * a * np.sqrt(q))
    far = np.arccosh(np.maximum(c, 1.0)) / a
    return np.where(c < 2.0, near, far)


def exp_map_array(x, v, t, a=1.0):
    """Geodesic from x with unit initial velocity v, at time t (arrays broadcast)."""
    t = np.asarray(t, dtype=float)[..., None]
    y = np.cosh(a * t) * x + (np.sinh(a * t) / a) * v
    return to_sheet(y, a)


def busemann_array(y, x, xi, a=1.0):
    return np.log(minkowski(y, xi) / minkowski(x, xi)) / a


def gromov_array(xi, eta, x, a=1.0):
    num = 2.0 * a**2 * minkowski(x, xi) * minkowski(x, eta)
    return np.log(num / -minkowski(xi, eta)) / (2.0 * a)


def polar_to_hyperboloid(r, u, a=1.0):
    """Point exp_o(r u) for polar coordinates about the origin; u has shape (..., d)."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    x0 = np.cosh(a * r) / a
    xs = (np.sinh(a * r) / a)[..., None] * u
    return np.concatenate([x0[..., None], xs], axis=-1)


def polar_busemann(r, u, xi, a=1.0):
    """busemann(exp_o(r u), o, xi) without forming the (possibly overflowing) point."""
    r = np.asarray(r, dtype=float)
    c = np.sum(np.asarray(u) * np.asarray(xi)[..., 1:], axis=-1)
    ar = a * r
    e = np.exp(-2.0 * ar)
    return (ar - math.log(2.0) + np.log((1.0 - c) + e * (1.0 + c))) / a


# ---------------------------------------------------------------------------
# public operations


def distance(x: HPoint, y: HPoint) -> float:
    a = _same_a(x, y)
    return float(distance_array(x.coords, y.coords, a))


def exp_map(x: HPoint, v: HTangent, t: float) -> HPoint:
    if v.base is not x and not np.allclose(v.base.coords, x.coords, rtol=1e-12, atol=1e-12):
        raise ParameterError("tangent vector is not based at x")
    if not v.is_unit(1e-8):
        raise NormalizationError(f"exp_map needs a unit vector, got norm {v.norm}")
    if t == 0:
        return x
    return HPoint(exp_map_array(x.coords, v.vec, t, x.curvature_a), x.curvature_a)


def geodesic_velocity(x: HPoint, v: HTangent, t: float) -> HTangent:
    """Velocity of the geodesic t -> exp_map(x, v, t); parallel along the geodesic."""
    a = x.curvature_a
    y = exp_map(x, v, t)
    w = a * math.sinh(a * t) * x.coords + math.cosh(a * t) * v.vec
    # remove the tiny normal component picked up by the reprojection
    w = w + a**2 * minkowski(y.coords, w) * y.coords
    return HTangent(y, w).normalized()


def log_map(x: HPoint, y: HPoint):
    """Unit initial direction at x of the geodesic to y, and the distance."""
    a = _same_a(x, y)
    dist = distance(x, y)
    if dist == 0:
        raise DomainError("log_map of coincident points has no direction")
    w = y.coords + a**2 * minkowski(x.coords, y.coords) * x.coords
    return HTangent(x, w).normalized(), dist


def boundary_of_ray(v: HTangent) -> BoundaryPoint:
    """Endpoint at infinity of the geodesic ray generated by v."""
    a = v.base.curvature_a
    return BoundaryPoint(a * v.base.coords + v.vec)


def busemann(y: HPoint, x: HPoint, xi: BoundaryPoint) -> float:
    """b(y, x, xi): decreases along the ray from x towards xi, b(x, x, xi) = 0."""
    a = _same_a(y, x)
    if xi.dim != x.dim:
        raise ParameterError("boundary point has wrong dimension")
    return float(busemann_array(y.coords, x.coords, xi.direction, a))


def gromov_product(xi: BoundaryPoint, eta: BoundaryPoint, x: HPoint) -> float:
    """(xi|eta)_x with the conventional factor 1/2.

    With this normalisation (xi|eta)_x - (xi|eta)_y = b(x,y,xi)/2 + b(x,y,eta)/2.
    """
    if xi == eta:
        raise DomainError("Gromov product of a boundary point with itself is infinite")
    return float(gromov_array(xi.direction, eta.direction, x.coords, x.curvature_a))


def visual_distance(xi: BoundaryPoint, eta: BoundaryPoint, x: HPoint, tau=None) -> float:
    if tau is None:
        tau = x.curvature_a / 2.0
    if tau <= 0:
        raise ParameterError("tau must be positive")
    if xi == eta:
        warnings.warn("visual distance of identical boundary points: returning 0", stacklevel=2)
        return 0.0
    return math.exp(-tau * gromov_product(xi, eta, x))


# ---------------------------------------------------------------------------
# upper half-plane chart (d = 2, a = 1)


def halfplane_to_hyperboloid_array(z):
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    n = x * x + y * y
    return np.stack([(n + 1.0) / (2.0 * y), x / y, (n - 1.0) / (2.0 * y)], axis=-1)


def hyperboloid_to_halfplane_array(p):
    p = np.asarray(p, dtype=float)
    y = 1.0 / (p[..., 0] - p[..., 2])
    return p[..., 1] * y + 1j * y


def halfplane_to_hyperboloid(z: complex) -> HPoint:
    if not z.imag > 0:
        raise DomainError(f"Im z must be positive, got {z}")
    return HPoint.project(halfplane_to_hyperboloid_array(z), 1.0)


def hyperboloid_to_halfplane(p: HPoint) -> complex:
    if p.dim != 2 or p.curvature_a != 1.0:
        raise ParameterError("half-plane chart needs d = 2, a = 1")
    return complex(hyperboloid_to_halfplane_array(p.coords))


def halfplane_boundary_array(s):
    """Boundary directions of real points s (np.inf allowed)."""
    s = np.asarray(s, dtype=float)
    inf = np.isinf(s)
    ss = np.where(inf, 0.0, s)
    den = ss * ss + 1.0
    out = np.stack([np.ones_like(ss), 2.0 * ss / den, (ss * ss - 1.0) / den], axis=-1)
    out[inf] = (1.0, 0.0, 1.0)
    return out


def halfplane_boundary(s) -> BoundaryPoint:
    """Boundary point for a real number s or ``math.inf``."""
    return BoundaryPoint(halfplane_boundary_array(float(s)))


def halfplane_distance_array(z, w):
    """d(z, w) = 2 asinh(|z - w| / (2 sqrt(Im z Im w))); stable at all scales."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return 2.0 * np.arcsinh(np.abs(z - w) / (2.0 * np.sqrt(z.imag * w.imag)))


def halfplane_distance_from_i(x, log_y):
    """Distance from i to x + i exp(log_y), usable when exp(log_y) underflows."""
    x = np.asarray(x, dtype=float)
    log_y = np.asarray(log_y, dtype=float)
    # |z - i|^2 / y = x^2/y + y - 2 + 1/y
    y = np.exp(log_y)
    num = np.hypot(x, y - 1.0)
    return 2.0 * np.arcsinh(0.5 * num * np.exp(-0.5 * log_y))
