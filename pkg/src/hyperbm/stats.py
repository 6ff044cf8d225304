"""Estimators, normality tests and the constant-curvature identity dashboard.

Sums are accumulated exactly (non-overlapping float expansions), so merging
shards in any order gives bit-identical estimates.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, UnsupportedModelError
from .geometry import busemann_array, gromov_array
from .kernels import bottom_of_spectrum_estimate, log_green_function, model_constants
from .models import ConstantCurvature

MIN_PATHS = 30
KS_95 = 1.36


class Method(str, Enum):
    ENDPOINT = "endpoint"  # functional(X_T) / T
    INCREMENT = "increment"  # (functional(X_T) - functional(X_{T/2})) / (T/2)
    MEAN = "mean"
    KERNEL = "kernel"  # read off a closed form, no sampling


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    std_error: float
    n: int
    method: Method = Method.MEAN

    def band(self, k=3.0):
        return self.value - k * self.std_error, self.value + k * self.std_error

    def scaled(self, c):
        return EstimateWithCI(c * self.value, abs(c) * self.std_error, self.n, self.method)


# ---------------------------------------------------------------------------
# exact accumulation


def _grow(partials, x):
    """Add x to a list of non-overlapping partials (Shewchuk); returns the new list."""
    out = []
    for y in partials:
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo:
            out.append(lo)
        x = hi
    out.append(x)
    return out


@dataclass
class MomentAccumulator:
    """Count, sum and sum of squares held exactly; merge is associative and commutative."""

    n: int = 0
    s1: list = field(default_factory=list)
    s2: list = field(default_factory=list)

    def add(self, values):
        for v in np.asarray(values, dtype=float).ravel():
            v = float(v)
            self.s1 = _grow(self.s1, v)
            self.s2 = _grow(self.s2, v * v)
            self.n += 1
        return self

    def merge(self, other: "MomentAccumulator"):
        out = MomentAccumulator(self.n + other.n, list(self.s1), list(self.s2))
        for p in other.s1:
            out.s1 = _grow(out.s1, p)
        for p in other.s2:
            out.s2 = _grow(out.s2, p)
        return out

    @property
    def mean(self):
        return math.fsum(self.s1) / self.n

    @property
    def variance(self):
        if self.n < 2:
            return float("nan")
        s = math.fsum(self.s1)
        return max(math.fsum(self.s2 + [-s * s / self.n]) / (self.n - 1), 0.0)

    def estimate(self, method=Method.MEAN) -> EstimateWithCI:
        se = math.sqrt(self.variance / self.n) if self.n >= 2 else float("nan")
        return EstimateWithCI(self.mean, se, self.n, method)


def mean_estimate(values, method=Method.MEAN) -> EstimateWithCI:
    return MomentAccumulator().add(values).estimate(method)


# ---------------------------------------------------------------------------
# per-path functionals


def _batch_T(batches):
    if not isinstance(batches, (list, tuple)):
        return batches.T, [batches]
    Ts = {round(b.T, 12) for b in batches}
    if len(Ts) != 1:
        raise ConfigError(f"paths do not share a common T: {sorted(Ts)}")
    return batches[0].T, list(batches)


def _radii(batches, t):
    return np.concatenate([b.radius_at(t) for b in batches])


def _functional_estimate(batches, fn, method, min_paths=MIN_PATHS):
    """Per-path growth rate of fn(r) by the endpoint or increment method."""
    T, bs = _batch_T(batches)
    if not T > 0:
        raise ConfigError("T must be positive")
    method = Method(method)
    rT = _radii(bs, T)
    if rT.size < min_paths:
        raise ConfigError(f"need at least {min_paths} paths, got {rT.size}")
    if method is Method.ENDPOINT:
        vals = fn(rT) / T
    elif method is Method.INCREMENT:
        vals = (fn(rT) - fn(_radii(bs, T / 2))) / (T / 2)
    else:
        raise ConfigError(f"unsupported estimator method {method}")
    return mean_estimate(vals, method)


def drift_estimate(batches, method=Method.ENDPOINT) -> EstimateWithCI:
    """Linear drift: mean of r_T / T (or of the increment over [T/2, T])."""
    return _functional_estimate(batches, lambda r: r, method)


def _model_of(batches):
    return (batches[0] if isinstance(batches, (list, tuple)) else batches).model


def entropy_estimate(batches, method=Method.ENDPOINT) -> EstimateWithCI:
    """Stochastic entropy: mean of -log G(r_T) / T."""
    m = _model_of(batches)
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("entropy needs a closed-form Green function")
    return _functional_estimate(batches, lambda r: -log_green_function(m, np.maximum(r, 1e-300)), method)


def growth_estimate(batches, method=Method.ENDPOINT) -> EstimateWithCI:
    """Volume growth along paths: mean of log A(r_T) / T."""
    m = _model_of(batches)
    return _functional_estimate(batches, lambda r: m.log_volume_density(np.maximum(r, 1e-300)), method)


def bottom_of_spectrum(m: ConstantCurvature) -> EstimateWithCI:
    """lambda0 from the diagonal decay of the heat kernel; error from halving the time window."""
    v = bottom_of_spectrum_estimate(m, 2000.0, 4000.0)
    w = bottom_of_spectrum_estimate(m, 1000.0, 2000.0)
    return EstimateWithCI(v, max(abs(v - w), 1e-12), 1, Method.KERNEL)


# ---------------------------------------------------------------------------
# normality


def normal_cdf(x):
    return ndtr(x)


def ks_statistic(samples, cdf=normal_cdf):
    """Exact one-sample Kolmogorov-Smirnov statistic sup |F_n - F|."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ConfigError("KS statistic of an empty sample")
    F = cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def ks_two_sample(x, y):
    """Two-sample KS statistic sup |F_x - F_y|."""
    x, y = np.sort(np.asarray(x, float)), np.sort(np.asarray(y, float))
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


@dataclass
class CLTReport:
    n_paths: int
    T: float
    sample_mean: float
    sample_std: float
    ks_statistic: float
    ks_threshold: float
    sigma_hat_sq: float
    sigma_hat_sq_se: float
    predicted_sigma_sq: float
    variance_rtol: float
    kind: str = "distance"

    @property
    def variance_ok(self):
        return abs(self.sigma_hat_sq / self.predicted_sigma_sq - 1.0) <= self.variance_rtol

    @property
    def passed(self):
        return self.ks_statistic <= self.ks_threshold and self.variance_ok


def normality_report(normalized, centred_over_sqrt_t, T, predicted_sigma_sq, ks_threshold=0.03,
                     variance_rtol=0.10, kind="distance") -> CLTReport:
    z = np.asarray(normalized, dtype=float)
    acc = MomentAccumulator().add(centred_over_sqrt_t)
    var = acc.variance
    return CLTReport(
        n_paths=int(z.size), T=float(T), sample_mean=float(z.mean()), sample_std=float(z.std(ddof=1)),
        ks_statistic=ks_statistic(z), ks_threshold=ks_threshold,
        sigma_hat_sq=var, sigma_hat_sq_se=var * math.sqrt(2.0 / (acc.n - 1)),
        predicted_sigma_sq=predicted_sigma_sq, variance_rtol=variance_rtol, kind=kind,
    )


def _clt_inputs(batches, min_paths, min_T):
    T, bs = _batch_T(batches)
    rT = _radii(bs, T)
    if rT.size < min_paths:
        raise ConfigError(f"CLT test needs at least {min_paths} paths, got {rT.size}")
    if T < min_T:
        raise ConfigError(f"CLT test needs T >= {min_T}, got {T}")
    return T, rT


def clt_test_distance(batches, constants=None, ks_threshold=0.03, variance_rtol=0.10, min_paths=1000,
                      min_T=50.0) -> CLTReport:
    """KS test of (r_T - l T) / sqrt(sigma_l^2 T) against the standard normal."""
    constants = constants or model_constants(_model_of(batches))
    T, r = _clt_inputs(batches, min_paths, min_T)
    y = (r - constants.ell * T) / math.sqrt(T)
    return normality_report(y / math.sqrt(constants.sigma_ell_sq), y, T, constants.sigma_ell_sq,
                            ks_threshold, variance_rtol, "distance")


def clt_test_green(batches, constants=None, ks_threshold=0.03, variance_rtol=0.10, min_paths=1000,
                   min_T=50.0) -> CLTReport:
    """KS test of (log G(r_T) + h T) / sqrt(sigma_kappa^2 T) against the standard normal."""
    m = _model_of(batches)
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("Green CLT needs a closed-form Green function")
    constants = constants or model_constants(m)
    T, r = _clt_inputs(batches, min_paths, min_T)
    y = (log_green_function(m, r) + constants.h * T) / math.sqrt(T)
    return normality_report(y / math.sqrt(constants.sigma_kappa_sq), y, T, constants.sigma_kappa_sq,
                            ks_threshold, variance_rtol, "green")


# ---------------------------------------------------------------------------
# Busemann and Gromov functionals


@dataclass
class BusemannReport:
    estimate: EstimateWithCI  # of b(w_T, w_0, xi)
    T: float
    predicted: float
    tolerance: float  # on estimate / T

    @property
    def per_time(self):
        return self.estimate.value / self.T if self.T > 0 else 0.0

    @property
    def passed(self):
        if self.T == 0:
            return self.estimate.value == 0.0
        return abs(self.per_time - self.predicted / self.T) <= self.tolerance


def busemann_drift_test(batch, xi, tolerance=0.03) -> BusemannReport:
    """Mean Busemann increment b(w_T, w_0, xi); equals (d-1) a T in constant curvature."""
    m = batch.model
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("Busemann drift test needs constant curvature")
    xic = getattr(xi, "direction", xi)
    ok = batch.valid
    b = busemann_array(batch.hyperboloid_points(-1)[ok], batch.hyperboloid_points(0)[ok], xic, m.a)
    return BusemannReport(mean_estimate(b), batch.T, (m.d - 1) * m.a * batch.T, tolerance)


def halfplane_log_height(batch) -> EstimateWithCI:
    """E[-log Im w_T + log Im w_0], exactly T for the half-plane process."""
    z = batch.states
    return mean_estimate(np.log(z[0].imag) - np.log(z[-1].imag))


@dataclass
class ContractionReport:
    T: float
    gain: EstimateWithCI  # (xi|eta)_{w_T} - (xi|eta)_x
    ratio: EstimateWithCI  # d_inf^{w_T,tau} / d_inf^{x,tau}
    predicted_gain: float
    tau: float
    fitted_rate: float
    times: np.ndarray = field(repr=False, default=None)
    mean_ratio: np.ndarray = field(repr=False, default=None)

    @property
    def gain_ok(self):
        return self.gain.value >= self.predicted_gain - 3.0 * self.gain.std_error

    @property
    def ratio_ok(self):
        return self.ratio.value < 1.0 if self.T > 0 else self.ratio.value == 1.0

    @property
    def passed(self):
        return self.gain_ok and self.ratio_ok


def contraction_test(batch, xi, eta, tau=None) -> ContractionReport:
    """Gromov-product gain and visual-distance ratio seen from w_T, relative to the start."""
    m = batch.model
    if not isinstance(m, ConstantCurvature):
        raise UnsupportedModelError("contraction test needs constant curvature")
    a = m.a
    tau = a / 2.0 if tau is None else tau
    xic, etac = getattr(xi, "direction", xi), getattr(eta, "direction", eta)
    ok = batch.valid
    x0 = batch.hyperboloid_points(0)[ok]
    base = gromov_array(xic, etac, x0, a)
    mean_ratio = np.empty(batch.times.size)
    for k in range(batch.times.size):
        gk = gromov_array(xic, etac, batch.hyperboloid_points(k)[ok], a) - base
        mean_ratio[k] = np.mean(np.exp(-tau * gk))
    gain = gromov_array(xic, etac, batch.hyperboloid_points(-1)[ok], a) - base
    ratio = np.exp(-tau * gain)
    t = batch.times
    sel = t > 0
    rate = float(-np.polyfit(t[sel], np.log(mean_ratio[sel]), 1)[0]) if sel.sum() >= 2 else float("nan")
    return ContractionReport(batch.T, mean_estimate(gain), mean_estimate(ratio), (m.d - 1) * a * batch.T,
                             tau, rate, t, mean_ratio)


# ---------------------------------------------------------------------------
# identity dashboard


@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    band: float
    kind: str  # "eq", "le" or "ge"
    status: str  # "pass", "fail" or "skipped"


@dataclass
class DashboardReport:
    checks: list

    @property
    def passed(self):
        return all(c.status != "fail" for c in self.checks)

    def by_name(self, name):
        return next(c for c in self.checks if c.name == name)


def _check(name, A, B, kind, k=3.0):
    if A is None or B is None:
        return IdentityCheck(name, float("nan"), float("nan"), float("nan"), kind, "skipped")
    band = k * math.hypot(A.std_error, B.std_error)
    diff = A.value - B.value
    ok = {"eq": abs(diff) <= band, "le": diff <= band, "ge": diff >= -band}[kind]
    return IdentityCheck(name, A.value, B.value, band, kind, "pass" if ok else "fail")


def identity_dashboard(h=None, ell=None, lambda0=None, upsilon=None, sigma_kappa_sq=None, h_top=None,
                       k=3.0) -> DashboardReport:
    """Constant-curvature identities and inequalities with k-SE bands; missing inputs are skipped."""
    four_l0 = lambda0.scaled(4.0) if lambda0 else None
    ell_sq = EstimateWithCI(ell.value**2, 2 * abs(ell.value) * ell.std_error, ell.n, ell.method) if ell else None
    ell_htop = ell.scaled(h_top) if (ell and h_top is not None) else None
    two_h = h.scaled(2.0) if h else None
    checks = [
        _check("4*lambda0 <= h", four_l0, h, "le", k),
        _check("ell^2 <= h", ell_sq, h, "le", k),
        _check("4*lambda0 = h", four_l0, h, "eq", k),
        _check("ell^2 = h", ell_sq, h, "eq", k),
        _check("h = ell*h_top", h, ell_htop, "eq", k),
        _check("Upsilon = h", upsilon, h, "eq", k),
        _check("sigma_kappa^2 >= 2h", sigma_kappa_sq, two_h, "ge", k),
    ]
    return DashboardReport(checks)


# ---------------------------------------------------------------------------
# serialisation


def fmt(x):
    """Full double precision (17 significant digits)."""
    return format(float(x), ".17g")


def _plain(obj):
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if is_dataclass(obj):
        out = {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
        if hasattr(type(obj), "passed"):
            out["pass"] = bool(obj.passed)
        return out
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def to_record(report, experiment, config_hash):
    return {"experiment": experiment, "config_hash": f"{config_hash:016x}", "report": _plain(report)}


def to_json(report, experiment, config_hash, **kw):
    return json.dumps(to_record(report, experiment, config_hash), sort_keys=True, **kw)


def write_csv(fh, header, rows):
    """Rows of numbers written at 17 significant digits; strings pass through."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])

