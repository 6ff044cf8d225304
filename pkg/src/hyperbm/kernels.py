"""Closed-form heat kernels, Green and Martin kernels of H^d(-a^2) for d in {2, 3}.

All kernels are for the heat equation d/dt p = Laplacian(p).  The curvature
enters only through the scaling law p_a(t, r) = a^d p_1(a^2 t, a r).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, UnsupportedModelError
from .geometry import busemann_array
from .models import ConstantCurvature, _log_sinh, sphere_area

_MCKEAN_TAIL = 60.0  # nats of decay at which the McKean integral is truncated


def _check_model(m):
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("closed-form kernels exist only for constant curvature")
    if m.d not in (2, 3):
        raise UnsupportedModelError(f"closed-form kernels are implemented for d in {{2, 3}}, got {m.d}")


# ---------------------------------------------------------------------------
# heat kernel


def _log_p3(t, r):
    r = np.asarray(r, dtype=float)
    safe = np.where(r > 0, r, 1.0)
    log_ratio = np.where(r > 0, np.log(safe) - _log_sinh(safe), 0.0)  # log(r / sinh r)
    return -1.5 * np.log(4.0 * math.pi * t) + log_ratio - t - r * r / (4.0 * t)


def _mckean_integral(t, r, rtol=1e-13):
    """I(t, r) = e^{r^2/4t} * int_r^inf s e^{-s^2/4t} / sqrt(cosh s - cosh r) ds.

    The substitution s = r + u^2 removes the endpoint singularity; the Gaussian
    factor e^{-r^2/4t} is pulled out so the result is O(1) for any r.
    """
    r = float(r)

    def integrand(u):
        w = u * u
        s = r + w
        # cosh s - cosh r = 2 sinh(r + w/2) sinh(w/2)
        if w == 0.0:
            if r == 0.0:
                return 0.0
            return 2.0 * r / math.sqrt(math.sinh(r))
        log_den = 0.5 * (math.log(2.0) + float(_log_sinh(r + 0.5 * w)) + math.log(math.sinh(0.5 * w)))
        log_num = math.log(s) - (w * w + 2.0 * r * w) / (4.0 * t) + math.log(2.0 * u)
        return math.exp(log_num - log_den)

    # truncate where (s^2 - r^2)/4t + w/4 reaches _MCKEAN_TAIL (w = s - r)
    bq = r / (2.0 * t) + 0.25
    w_max = (-bq + math.sqrt(bq * bq + _MCKEAN_TAIL / t)) * 2.0 * t
    u_max = math.sqrt(w_max)
    edges = np.linspace(0.0, u_max, 9)
    total, err = 0.0, 0.0
    for u0, u1 in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, u0, u1, epsabs=0.0, epsrel=rtol, limit=200)
        total += val
        err += e
    if not err <= 1e-9 * abs(total) + 1e-300:
        raise NumericError("McKean quadrature did not converge", t=t, r=r, estimate=total, error=err)
    return total


def _log_p2(t, r):
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    for i, ri in enumerate(r.flat):
        I = _mckean_integral(t, ri)
        out.flat[i] = (
            0.5 * math.log(2.0) - 1.5 * math.log(4.0 * math.pi * t) - t / 4.0 - ri * ri / (4.0 * t) + math.log(I)
        )
    return out


def log_heat_kernel(m: ConstantCurvature, t, r):
    _check_model(m)
    t = float(t)
    if not t > 0:
        raise DomainError("heat kernel needs t > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("r must be nonnegative")
    a = m.a
    log_p1 = _log_p3 if m.d == 3 else _log_p2
    out = m.d * math.log(a) + log_p1(a * a * t, a * r)
    return out.reshape(r.shape) if r.ndim else float(np.ravel(out)[0])


def heat_kernel(m: ConstantCurvature, t, r):
    """p(t, r): density w.r.t. Riemannian volume of Brownian motion at distance r after time t."""
    return np.exp(log_heat_kernel(m, t, r))


def radial_density(m: ConstantCurvature, t, r):
    """Density of d(x, omega_t) w.r.t. dr: p(t, r) * |S^{d-1}| * A(r)."""
    r = np.asarray(r, dtype=float)
    log_a = np.where(r > 0, m.log_volume_density(np.where(r > 0, r, 1.0)), -np.inf)
    return sphere_area(m.d - 1) * np.exp(log_heat_kernel(m, t, r) + log_a)


@dataclass
class RadialCDF:
    """Tabulated CDF of d(x, omega_t), accurate to quadrature tolerance on its grid."""

    model: ConstantCurvature
    t: float
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.interp(r, self.grid, self.values, left=0.0, right=1.0)


@functools.lru_cache(maxsize=32)
def radial_cdf(m: ConstantCurvature, t, n_grid=2001):
    """CDF of d(x, omega_t) by composite Simpson integration of the radial density."""
    a = m.a
    mean = (m.d - 1) * a * t
    hi = mean + 14.0 * math.sqrt(2.0 * t) + 10.0 / a
    n = n_grid if m.d == 2 else 4 * n_grid
    grid = np.linspace(0.0, hi, n)
    dens = radial_density(m, t, grid)
    cdf = integrate.cumulative_simpson(dens, x=grid, initial=0.0)
    if abs(cdf[-1] - 1.0) > 1e-6:
        raise NumericError("radial CDF does not integrate to one", total=float(cdf[-1]), t=t)
    return RadialCDF(m, t, grid, cdf / cdf[-1])


# ---------------------------------------------------------------------------
# Green and Martin kernels


def green_function(m: ConstantCurvature, r):
    """G(r) = int_0^inf p(t, r) dt."""
    _check_model(m)
    return np.exp(log_green_function(m, r))


def log_green_function(m: ConstantCurvature, r):
    _check_model(m)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("Green function has a pole at r = 0")
    a = m.a
    x = a * r
    if m.d == 3:
        # a e^{-x} / (4 pi sinh x)
        out = math.log(a) - x - math.log(4.0 * math.pi) - _log_sinh(x)
    else:
        # (1/2pi) log coth(x/2) = (1/2pi) log1p(2 / (e^x - 1))
        big = x > 30
        out = np.log(np.log1p(2.0 / np.expm1(np.where(big, 1.0, x)))) - math.log(2.0 * math.pi)
        # log coth(x/2) ~ 2 e^{-x} once e^x overflows the expression above
        out = np.where(big, math.log(2.0) - np.where(big, x, 0.0) - math.log(2.0 * math.pi), out)
    return out if out.ndim else float(out)


def martin_kernel(m: ConstantCurvature, x, y, xi):
    """k(x, y, xi) = exp(-(d-1) a b(y, x, xi)); arguments are coordinate arrays or value types."""
    xc = getattr(x, "coords", x)
    yc = getattr(y, "coords", y)
    xic = getattr(xi, "direction", xi)
    return np.exp(-(m.d - 1) * m.a * busemann_array(yc, xc, xic, m.a))


# ---------------------------------------------------------------------------
# model constants


@dataclass(frozen=True)
class ModelConstants:
    ell: float
    h: float
    lambda0: float
    h_top: float
    sigma_ell_sq: float
    sigma_kappa_sq: float
    note: str = "constant curvature predictions"


def model_constants(m) -> ModelConstants:
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("model constants are only known in constant curvature")
    d, a = m.d, m.a
    h = (d - 1) ** 2 * a * a
    return ModelConstants(
        ell=(d - 1) * a,
        h=h,
        lambda0=h / 4.0,
        h_top=(d - 1) * a,
        sigma_ell_sq=2.0,
        sigma_kappa_sq=2.0 * h,
    )


def bottom_of_spectrum_estimate(m: ConstantCurvature, t1=2000.0, t2=4000.0):
    """lambda0 read off the diagonal decay -d/dt log p(t, 0) at large t."""
    lp1 = log_heat_kernel(m, t1, 0.0)
    lp2 = log_heat_kernel(m, t2, 0.0)
    # the t^{-3/2} prefactor contributes (3/2) log(t2/t1) / (t2 - t1)
    return -(lp2 - lp1) / (t2 - t1) - 1.5 * math.log(t2 / t1) / (t2 - t1)


# ---------------------------------------------------------------------------
# comparison and Gaussian-bound diagnostics


@dataclass
class ComparisonReport:
    d: int
    a: float
    b: float
    n_points: int
    n_violations: int
    max_violation: float
    tolerance: float

    @property
    def passed(self):
        return self.n_violations == 0


def comparison_check(a, b, d, t_grid, r_grid, rtol=1e-8):
    """Check p_{H^d(-b^2)}(t, r) <= p_{H^d(-a^2)}(t, r) on a grid; violations are counted, not raised."""
    if not a <= b:
        raise DomainError("comparison needs a <= b")
    ma, mb = ConstantCurvature(d, a), ConstantCurvature(d, b)
    r_grid = np.asarray(r_grid, dtype=float)
    n = nv = 0
    worst = 0.0
    for t in np.atleast_1d(t_grid):
        la = log_heat_kernel(ma, t, r_grid)
        lb = log_heat_kernel(mb, t, r_grid)
        # relative excess p_b / p_a - 1, in logs so far tails do not underflow
        excess = np.expm1(lb - la)
        worst = max(worst, float(excess.max()))
        nv += int(np.sum(excess > rtol))
        n += r_grid.size
    return ComparisonReport(d, a, b, n, nv, max(worst, 0.0), rtol)


@dataclass
class GaussianBoundReport:
    C_fit: float
    argmax: tuple
    fixed_r_slope: float  # d log(ratio) / d log t at fixed r
    diagonal_ratio_max: float  # max ratio on r^2 = t

    @property
    def finite(self):
        return math.isfinite(self.C_fit)


def gaussian_bound_diagnostic(t_grid=None, r_grid=None, r_fixed=5.0):
    """Smallest C with p <= C (r^2/t)^{1+d/2} exp(-r^2/4t - lambda0 t) on a grid, H^3(-1)."""
    m = ConstantCurvature(3, 1.0)
    lam0 = model_constants(m).lambda0
    d = 3
    t_grid = np.linspace(1.0, 50.0, 99) if t_grid is None else np.asarray(t_grid, dtype=float)
    r_grid = np.linspace(0.5, 50.0, 199) if r_grid is None else np.asarray(r_grid, dtype=float)

    def log_ratio(t, r):
        log_bound = (1 + d / 2) * np.log(r * r / t) - r * r / (4 * t) - lam0 * t
        return log_heat_kernel(m, t, r) - log_bound

    tt, rr = np.meshgrid(t_grid, r_grid, indexing="ij")
    lr = np.vectorize(log_ratio)(tt, rr)
    i = np.unravel_index(np.argmax(lr), lr.shape)
    ts = np.array([t_grid[-1] / 2, t_grid[-1]])
    slope = float(np.diff([log_ratio(t, r_fixed) for t in ts])[0] / np.diff(np.log(ts))[0])
    diag = np.array([log_ratio(t, math.sqrt(t)) for t in t_grid])
    return GaussianBoundReport(
        C_fit=float(np.exp(lr[i])),
        argmax=(float(tt[i]), float(rr[i])),
        fixed_r_slope=slope,
        diagonal_ratio_max=float(np.exp(diag.max())),
    )
