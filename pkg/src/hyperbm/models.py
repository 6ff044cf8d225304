"""Riemannian models supplying the polar-coordinate data of the Laplacian.

Generator convention: Brownian motion solves d/dt p = Laplacian(p), with no
factor 1/2.  In polar coordinates about the pole the radial part is
``dr = radial_drift(r) dt + sqrt(2) dW`` and the direction is a spherical
Brownian motion run at speed ``angular_rate(r)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

from .errors import DomainError, NumericError, ParameterError, UnsupportedModelError

PINCH_EPS = 1e-4
DEFAULT_R_MAX = 400.0


def sphere_area(n):
    """Area of the unit sphere S^n."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


def _log_sinh(x):
    x = np.asarray(x, dtype=float)
    big = x > 20
    small = np.log(np.sinh(np.where(big, 1.0, x)))
    return np.where(big, x - math.log(2.0) + np.log1p(-np.exp(-2.0 * np.where(big, x, 20.0))), small)


@dataclass(frozen=True)
class ConstantCurvature:
    d: int = 3
    a: float = 1.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ParameterError("dimension must be an integer >= 2")
        if not self.a > 0:
            raise ParameterError("curvature parameter a must be positive")

    kind = "constant"

    def warp(self, r):
        return np.sinh(self.a * np.asarray(r, dtype=float)) / self.a

    def log_warp(self, r):
        return _log_sinh(self.a * np.asarray(r, dtype=float)) - math.log(self.a)

    def log_volume_density(self, r):
        return (self.d - 1) * self.log_warp(r)

    def volume_density(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("r must be nonnegative")
        return self.warp(r) ** (self.d - 1)

    def radial_drift(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("radial drift is singular at r = 0")
        return (self.d - 1) * self.a / np.tanh(self.a * r)

    def regular_drift(self, r):
        """radial_drift(r) - (d-1)/r, bounded near the pole."""
        ar = self.a * np.asarray(r, dtype=float)
        # coth(x) - 1/x; series below 1e-2 avoids cancellation
        small = ar < 1e-2
        safe = np.where(small, 1.0, ar)
        val = np.where(small, ar / 3.0 - ar**3 / 45.0, 1.0 / np.tanh(safe) - 1.0 / safe)
        return (self.d - 1) * self.a * val

    def angular_rate(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("angular rate is singular at r = 0")
        return (self.a / np.sinh(self.a * r)) ** 2


@dataclass(frozen=True, eq=False)
class RotSym:
    """Rotationally symmetric surface dr^2 + f(r)^2 dtheta^2 with a gridded warp f.

    ``a`` and ``b`` are the declared pinching bounds: -b^2 <= K <= -a^2 with
    K = -f''/f.  Internally log(f(r)/r) is spline-interpolated, which stays
    accurate over the exponential range of f and is smooth at the pole.
    """

    r_grid: np.ndarray
    f_grid: np.ndarray
    a: float
    b: float
    r_max: float = None
    pinching: dict = field(default_factory=dict, compare=False)

    d = 2
    kind = "rotsym"

    def __post_init__(self):
        r = np.array(self.r_grid, dtype=float)
        f = np.array(self.f_grid, dtype=float)
        if r.ndim != 1 or r.shape != f.shape or r.size < 8:
            raise ParameterError("warp grid needs matching 1-d arrays of at least 8 points")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ParameterError("warp grid must start at r = 0 and increase strictly")
        if f[0] != 0.0 or np.any(f[1:] <= 0):
            raise ParameterError("warp must satisfy f(0) = 0 and f > 0 on (0, r_max]")
        if not 0 < self.a <= self.b:
            raise ParameterError("need 0 < a <= b")
        r_max = r[-1] if self.r_max is None else float(self.r_max)
        if r_max > r[-1]:
            raise ParameterError("r_max exceeds the warp grid")
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "f_grid", f)
        object.__setattr__(self, "r_max", r_max)
        u = np.empty_like(r)
        u[0] = 0.0
        u[1:] = np.log(f[1:] / r[1:])
        slope0 = (f[1] - f[0]) / r[1]
        if abs(slope0 - 1.0) > 1e-3:
            raise ParameterError(f"warp must satisfy f'(0) = 1 (grid slope {slope0:.6g})")
        spline = CubicSpline(r, u, bc_type=((1, 0.0), "not-a-knot"))
        object.__setattr__(self, "_u", spline)
        object.__setattr__(self, "_du", spline.derivative())
        object.__setattr__(self, "_ddu", spline.derivative(2))
        object.__setattr__(self, "pinching", self._validate_pinching())

    # -- construction -------------------------------------------------------

    @classmethod
    def from_file(cls, path, a, b, r_max=None):
        """Load a two-column text file of (r, f(r))."""
        data = np.loadtxt(path, dtype=float, ndmin=2)
        if data.shape[1] != 2:
            raise ParameterError("warp file must have exactly two columns")
        return cls(data[:, 0], data[:, 1], a, b, r_max)

    def save(self, path):
        np.savetxt(path, np.column_stack([self.r_grid, self.f_grid]), fmt="%.17g")

    # -- validation ----------------------------------------------------------

    def _validate_pinching(self):
        r, f = self.r_grid, self.f_grid
        h0 = r[1:-1] - r[:-2]
        h1 = r[2:] - r[1:-1]
        fpp = 2.0 * (h0 * f[2:] - (h0 + h1) * f[1:-1] + h1 * f[:-2]) / (h0 * h1 * (h0 + h1))
        curv = -fpp / f[1:-1]
        lo, hi = float(curv.min()), float(curv.max())
        if lo < -self.b**2 - PINCH_EPS or hi > -self.a**2 + PINCH_EPS:
            raise ParameterError(
                f"warp curvature range [{lo:.6g}, {hi:.6g}] outside the declared "
                f"pinching [{-self.b**2:.6g}, {-self.a**2:.6g}]"
            )
        # |grad K| is not enforced; reported as a diagnostic only
        dk = np.diff(curv) / np.diff(r[1:-1])
        return {"K_min": lo, "K_max": hi, "max_abs_dK": float(np.abs(dk).max())}

    def _check_range(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise DomainError("r must be nonnegative")
        if np.any(r > self.r_max):
            raise DomainError(f"r exceeds r_max = {self.r_max}")
        return r

    # -- polar data ----------------------------------------------------------

    def log_warp(self, r):
        r = np.asarray(r, dtype=float)
        return np.log(r) + self._u(r)

    def warp(self, r):
        r = self._check_range(r)
        return r * np.exp(self._u(r))

    def log_volume_density(self, r):
        return self.log_warp(r)

    def volume_density(self, r):
        return self.warp(r)

    def radial_drift(self, r):
        r = self._check_range(r)
        if np.any(r == 0):
            raise DomainError("radial drift is singular at r = 0")
        return 1.0 / r + self._du(r)

    def regular_drift(self, r):
        return self._du(self._check_range(r))

    def angular_rate(self, r):
        r = self._check_range(r)
        if np.any(r == 0):
            raise DomainError("angular rate is singular at r = 0")
        return np.exp(-2.0 * self.log_warp(r))

    def curvature(self, r):
        """-f''/f from the interpolant: f''/f = u'' + 2u'/r + u'^2 with u = log(f/r)."""
        r = self._check_range(r)
        du = self._du(r)
        return -(self._ddu(r) + 2.0 * du / r + du * du)

    def sandwich_violation(self, r):
        """Largest excess of f'/f outside [a coth(b r), b coth(a r)] (0 when inside)."""
        r = np.asarray(r, dtype=float)
        q = self.radial_drift(r)
        lo = self.a / np.tanh(self.b * r)
        hi = self.b / np.tanh(self.a * r)
        return float(np.max(np.maximum(lo - q, 0.0) + np.maximum(q - hi, 0.0)))


ModelSpec = ConstantCurvature | RotSym


def volume_density(m, r):
    return m.volume_density(r)


def radial_drift(m, r):
    return m.radial_drift(r)


def angular_rate(m, r):
    return m.angular_rate(r)


# ---------------------------------------------------------------------------
# warp-grid construction


def warp_grid(kappa, r_max=DEFAULT_R_MAX, h=0.005):
    """Warp f with f'' = kappa(r)^2 f, f(0) = 0, f'(0) = 1 on a uniform grid.

    Integrates q = f'/f (Riccati form) and log f, which do not overflow.
    Returns (r, f).
    """
    r0 = 1e-4
    k0 = kappa(0.0)
    f0 = r0 + k0**2 * r0**3 / 6.0
    fp0 = 1.0 + k0**2 * r0**2 / 2.0

    def rhs(r, y):
        q = y[1]
        return [q, kappa(r) ** 2 - q * q]

    n = int(round(r_max / h))
    r = np.linspace(0.0, r_max, n + 1)
    sol = integrate.solve_ivp(
        rhs, (r0, r_max), [math.log(f0), fp0 / f0], t_eval=r[1:], rtol=1e-12, atol=1e-12, method="DOP853"
    )
    if not sol.success:
        raise NumericError("warp integration failed", message=sol.message)
    f = np.empty_like(r)
    f[0] = 0.0
    f[1:] = np.exp(sol.y[0])
    return r, f


def pinched_profile(a, b, period=3.0):
    """Curvature profile kappa(r) oscillating between a and b."""
    mid, amp = 0.5 * (a + b), 0.5 * (b - a)
    return lambda r: mid + amp * math.sin(2.0 * math.pi * r / period)


# ---------------------------------------------------------------------------
# geodesic distance on RotSym surfaces


@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise DomainError("polar radius must be nonnegative")


def _angle_gap(p, q):
    dt = abs(p.theta - q.theta) % (2.0 * math.pi)
    return min(dt, 2.0 * math.pi - dt)


def rotsym_distance(m: RotSym, p: PolarPoint, q: PolarPoint, rtol=1e-10) -> float:
    """Geodesic distance by Clairaut reduction.

    A geodesic with Clairaut constant c = f(r) sin(psi) advances
    dtheta/dr = c / (f sqrt(f^2 - c^2)) and ds/dr = f / sqrt(f^2 - c^2).
    Geodesics that turn at r* (f(r*) = c) are integrated from r* on both sides.
    """
    if not isinstance(m, RotSym):
        raise UnsupportedModelError("rotsym_distance needs a RotSym model")
    m._check_range([p.r, q.r])
    lo, hi = sorted((p.r, q.r))
    gap = _angle_gap(p, q)
    if lo == 0.0 or gap == 0.0:
        return hi - lo if gap == 0.0 else hi
    pole = p.r + q.r
    if gap >= math.pi - 1e-15:
        return pole

    def logf(r):
        return float(m.log_warp(r))

    def pieces(c_log, start, end):
        # substitution r = start + w^2 removes the endpoint inverse square root
        gap0 = logf(start) - c_log
        q0 = float(m.radial_drift(start))

        def excess(w):
            # log f(start + w^2) - log c, Taylor-expanded where the difference cancels
            if w * w < 1e-7 * max(start, 1e-3):
                return gap0 + q0 * w * w
            return logf(start + w * w) - c_log

        def dth(w):
            e = excess(w)
            if e <= 0.0:
                return 2.0 / math.sqrt(2.0 * q0) * math.exp(-logf(start))
            lf = c_log + e
            return 2.0 * w * math.exp(-e - lf) / math.sqrt(-math.expm1(-2.0 * e))

        def dlen(w):
            e = excess(w)
            if e <= 0.0:
                return 2.0 / math.sqrt(2.0 * q0)
            return 2.0 * w / math.sqrt(-math.expm1(-2.0 * e))

        wmax = math.sqrt(end - start)
        # near the pole the integrands vary on the scale w ~ sqrt(start)
        edges = [0.0]
        w = 0.5 * math.sqrt(start)
        while w < wmax:
            edges.append(w)
            w *= 2.0
        edges.append(wmax)
        th = ln = 0.0
        for w0, w1 in zip(edges[:-1], edges[1:]):
            th += integrate.quad(dth, w0, w1, epsabs=0.0, epsrel=rtol, limit=200)[0]
            ln += integrate.quad(dlen, w0, w1, epsabs=0.0, epsrel=rtol, limit=200)[0]
        return th, ln

    log_lo = logf(lo)
    # monotone branch, c in (0, f(lo)]
    th_max, _ = pieces(log_lo, lo, hi)

    def mono(c_log):
        return pieces(c_log, lo, hi)

    try:
        if gap <= th_max:
            g = lambda x: mono(log_lo + math.log(x))[0] - gap  # x = c / f(lo)
            if g(1e-300) >= 0:
                # gap below ~1e-300: the radial segment, up to O(gap^2)
                return hi - lo
            x = optimize.brentq(g, 1e-300, 1.0, xtol=1e-15, rtol=1e-14, maxiter=200)
            length = mono(log_lo + math.log(x))[1]
        else:
            def turn(rs):
                c_log = logf(rs)
                t1, l1 = pieces(c_log, rs, lo)
                t2, l2 = pieces(c_log, rs, hi)
                return t1 + t2, l1 + l2

            g = lambda rs: turn(rs)[0] - gap
            # turning radii below this change the length by < 1e-9 relative
            rs_min = min(1e-5, 0.1 * lo)
            if g(rs_min) <= 0:
                return pole
            rs = optimize.brentq(g, rs_min, lo, xtol=1e-15, rtol=1e-14, maxiter=200)
            length = turn(rs)[1]
    except (ValueError, RuntimeError) as exc:
        raise NumericError("Clairaut root finding failed", p=p, q=q, gap=gap, cause=str(exc)) from exc
    return min(length, pole)
