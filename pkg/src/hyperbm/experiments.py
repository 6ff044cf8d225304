"""Experiment runners shared by the CLI, the scripts and the test-suite.

Each runner takes an :class:`ExperimentConfig` and a :class:`RunContext`
(which caches path batches between experiments) and returns an
:class:`ExperimentResult` holding a pass flag, summary numbers and CSV rows.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels, modular, stats
from .config import ExperimentConfig
from .errors import ConfigError, UnsupportedModelError
from .geometry import BoundaryPoint, busemann_array
from .models import ConstantCurvature, RotSym
from .rng import RngPolicy
from .sampler import boundary_limit, simulate_halfplane, simulate_hyperboloid, simulate_polar

CUSP_TARGET = 1.5 / math.pi  # normalised area of Im z > 2 in the modular domain


@dataclass
class ExperimentResult:
    name: str
    passed: bool
    summary: dict
    csv_header: list
    csv_rows: list = field(repr=False)
    report: object = field(default=None, repr=False)
    wall_time: float = float("nan")


def build_model(cfg: ExperimentConfig):
    if cfg.model == "rotsym":
        return RotSym.from_file(cfg.warp_file, cfg.a, cfg.b)
    return ConstantCurvature(cfg.d, cfg.a)


def simulate(model, scheme, T, dt, n_paths, rng, record_every=100, workers=1):
    """Dispatch to a sampler; record_every is reduced if needed so that T/2 is recorded."""
    n_steps = int(round(T / dt))
    if n_steps % 2 == 0:
        record_every = math.gcd(record_every, n_steps // 2) or 1
    if scheme == "halfplane":
        if not (isinstance(model, ConstantCurvature) and model.d == 2 and model.a == 1.0):
            raise ConfigError("the half-plane scheme is for H^2(-1) only")
        return simulate_halfplane(T, dt, 1j, n_paths, rng, record_every=record_every, workers=workers)
    if scheme == "polar":
        return simulate_polar(model, T, dt, n_paths, rng, record_every=record_every, workers=workers)
    if scheme == "hyperboloid":
        return simulate_hyperboloid(model, T, dt, n_paths, rng, record_every=record_every, workers=workers)
    raise ConfigError(f"unknown scheme {scheme!r}")


class RunContext:
    """Owns the model, the RNG policy and a cache of simulated batches."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.model = build_model(cfg)
        self.rng = RngPolicy(cfg.master_seed)
        self._cache = {}

    def batch(self, experiment, tag="paths", scheme=None):
        c = self.cfg
        scheme = scheme or c.setting(experiment, "scheme")
        key = (tag, scheme, c.setting(experiment, "T"), c.setting(experiment, "dt"),
               c.setting(experiment, "n_paths"))
        if key not in self._cache:
            _, scheme, T, dt, n = key
            self._cache[key] = simulate(self.model, scheme, float(T), float(dt), int(n),
                                        self.rng.with_stream(f"{tag}:{scheme}"), c.record_every, c.workers)
        return self._cache[key]


def _constant(ctx, what):
    if not isinstance(ctx.model, ConstantCurvature):
        raise UnsupportedModelError(f"{what} needs a constant-curvature model")
    return kernels.model_constants(ctx.model)


def _summary_row(est: stats.EstimateWithCI):
    return ["summary", est.value, est.std_error]


# ---------------------------------------------------------------------------
# runners


def run_drift(cfg, ctx):
    """Asserts the unbiased increment estimate within tol + k SE; the endpoint estimate is reported."""
    b = ctx.batch("drift")
    est = stats.drift_estimate(b)
    inc = stats.drift_estimate(b, stats.Method.INCREMENT)
    tol = cfg.tolerances.drift + cfg.tolerances.band_k * inc.std_error
    m = ctx.model
    if isinstance(m, ConstantCurvature):
        lo = hi = (m.d - 1) * m.a
    else:  # comparison sandwich
        lo, hi = (m.d - 1) * m.a, (m.d - 1) * m.b
    ok = lo - tol <= inc.value <= hi + tol
    ok_ids = b.path_ids[b.valid]
    rT = b.radius_at()
    rows = [[int(i), float(r), float(r / b.T)] for i, r in zip(ok_ids, rT)] + [_summary_row(est)]
    return ExperimentResult("drift", bool(ok), {
        "ell_hat": est.value, "std_error": est.std_error, "ell_hat_increment": inc.value,
        "increment_std_error": inc.std_error, "n": est.n, "predicted_low": lo, "predicted_high": hi,
        "band": tol, "excluded_paths": b.n_excluded,
    }, ["path_id", "r_T", "r_T_over_T"], rows, est)


def run_entropy(cfg, ctx):
    c = _constant(ctx, "entropy")
    b = ctx.batch("entropy")
    est = stats.entropy_estimate(b)
    inc = stats.entropy_estimate(b, stats.Method.INCREMENT)
    rT = b.radius_at()
    lg = kernels.log_green_function(ctx.model, rT)
    band = cfg.tolerances.entropy + cfg.tolerances.band_k * inc.std_error
    ok = abs(inc.value - c.h) <= band
    rows = [[int(i), float(r), float(-g / b.T)] for i, r, g in zip(b.path_ids, rT, lg)] + [_summary_row(est)]
    return ExperimentResult("entropy", bool(ok), {
        "h_hat": est.value, "std_error": est.std_error, "h_hat_increment": inc.value,
        "increment_std_error": inc.std_error, "n": est.n, "predicted": c.h, "band": band, "drift_squared": stats.drift_estimate(b).value ** 2,
    }, ["path_id", "r_T", "minus_log_G_over_T"], rows, est)


def _clt_rows(b, normalized, rep):
    rows = [[int(i), float(r), float(z)] for i, r, z in zip(b.path_ids, b.radius_at(), normalized)]
    rows.append(["summary", rep.ks_statistic, rep.sigma_hat_sq])
    return rows


def run_clt_distance(cfg, ctx):
    c = _constant(ctx, "the distance CLT")
    b = ctx.batch("clt-distance")
    t = cfg.tolerances
    rep = stats.clt_test_distance(b, c, t.ks, t.variance_rtol)
    z = (b.radius_at() - c.ell * b.T) / math.sqrt(c.sigma_ell_sq * b.T)
    return ExperimentResult("clt-distance", rep.passed, stats._plain(rep), ["path_id", "r_T", "normalized"],
                            _clt_rows(b, z, rep), rep)


def run_clt_green(cfg, ctx):
    c = _constant(ctx, "the Green CLT")
    b = ctx.batch("clt-green")
    t = cfg.tolerances
    rep = stats.clt_test_green(b, c, t.ks, t.variance_rtol)
    h = stats.entropy_estimate(b)
    sk = stats.EstimateWithCI(rep.sigma_hat_sq, rep.sigma_hat_sq_se, rep.n_paths)
    dash = stats.identity_dashboard(h=h, sigma_kappa_sq=sk, k=t.band_k)
    ineq = dash.by_name("sigma_kappa^2 >= 2h").status == "pass"
    z = (kernels.log_green_function(ctx.model, b.radius_at()) + c.h * b.T) / math.sqrt(c.sigma_kappa_sq * b.T)
    summary = stats._plain(rep)
    summary.update(sigma_kappa_ge_2h=ineq, h_hat=h.value, h_std_error=h.std_error)
    return ExperimentResult("clt-green", rep.passed and ineq, summary, ["path_id", "r_T", "normalized"],
                            _clt_rows(b, z, rep), rep)


def _axis_boundary(d, sign=1.0):
    v = np.zeros(d + 1)
    v[0], v[-1] = 1.0, sign
    return BoundaryPoint(v)


def run_busemann(cfg, ctx):
    _constant(ctx, "the Busemann test")
    b = ctx.batch("busemann")
    xi = _axis_boundary(ctx.model.d)
    rep = stats.busemann_drift_test(b, xi, cfg.tolerances.busemann)
    # same convention as drift: the fixed tolerance widened by k standard errors (per unit time)
    band = cfg.tolerances.busemann + cfg.tolerances.band_k * rep.estimate.std_error / b.T
    summary = {"mean_b": rep.estimate.value, "std_error": rep.estimate.std_error, "per_time": rep.per_time,
               "predicted": rep.predicted, "T": b.T, "tolerance": rep.tolerance, "band": band}
    ok = abs(rep.per_time - rep.predicted / b.T) <= band
    if b.scheme.value == "halfplane":
        lh = stats.halfplane_log_height(b)
        exact_ok = abs(lh.value - b.T) <= cfg.tolerances.band_k * lh.std_error
        summary.update(log_height=lh.value, log_height_std_error=lh.std_error, log_height_ok=exact_ok)
        ok = ok and exact_ok
    vals = busemann_array(b.hyperboloid_points(-1), b.hyperboloid_points(0), xi.direction, ctx.model.a)
    rows = [[int(i), float(v)] for i, v in zip(b.path_ids, vals)] + [_summary_row(rep.estimate)]
    return ExperimentResult("busemann", bool(ok), summary, ["path_id", "b_T"], rows, rep)


def run_contraction(cfg, ctx, tau=0.3):
    _constant(ctx, "the contraction test")
    b = ctx.batch("contraction")
    d = ctx.model.d
    rep = stats.contraction_test(b, _axis_boundary(d, 1.0), _axis_boundary(d, -1.0), tau)
    rows = [[float(t), float(r)] for t, r in zip(rep.times, rep.mean_ratio)]
    rows.append(["summary", rep.gain.value, rep.gain.std_error])
    return ExperimentResult("contraction", rep.passed, {
        "gain": rep.gain.value, "gain_std_error": rep.gain.std_error, "predicted_gain": rep.predicted_gain,
        "visual_ratio": rep.ratio.value, "visual_ratio_std_error": rep.ratio.std_error, "tau": tau,
        "fitted_rate": rep.fitted_rate,
    }, ["t", "mean_visual_ratio"], rows, rep)


def run_mixing(cfg, ctx):
    T = float(cfg.setting("mixing", "T"))
    n = int(cfg.setting("mixing", "n_paths"))
    dt = float(cfg.setting("mixing", "dt"))
    if n < 10_000:
        raise ConfigError("mixing needs at least 10^4 paths")
    grid = np.arange(0.0, T + 0.5, 1.0)
    grid = grid[grid <= T]
    part = modular.PartitionSpec.default()
    rep = modular.mixing_tv(grid, n, part, dt=dt, rng=ctx.rng.with_stream("mixing"), workers=cfg.workers)
    ok_end = rep.tv[-1] <= rep.noise_floor + cfg.tolerances.mixing_excess
    mono = rep.monotone(2.0)
    rows = [[float(t), float(v), rep.noise_floor] for t, v in zip(rep.times, rep.tv)]
    return ExperimentResult("mixing", bool(ok_end and mono), {
        "tv_final": float(rep.tv[-1]), "noise_floor": rep.noise_floor, "monotone": mono,
        "fitted_rate": rep.fitted_rate, "cells": part.n_cells, "n_paths": n,
    }, ["t", "tv", "noise_floor"], rows, rep)


def cauchy_cdf(x):
    return 0.5 + np.arctan(x) / math.pi


def run_harmonic_measure(cfg, ctx):
    b = ctx.batch("harmonic-measure", tag="harmonic", scheme="halfplane")
    est = boundary_limit(b)
    ks = stats.ks_statistic(est.halfplane_x, cauchy_cdf)
    rows = [[int(i), float(x), int(lc)] for i, x, lc in zip(b.path_ids, est.halfplane_x, est.low_confidence)]
    return ExperimentResult("harmonic-measure", ks <= cfg.tolerances.harmonic_ks, {
        "ks_statistic": ks, "ks_threshold": cfg.tolerances.harmonic_ks, "n": int(b.n_paths),
        "low_confidence": int(est.low_confidence.sum()), "T": b.T,
    }, ["path_id", "x_inf", "low_confidence"], rows)


def run_equidistribution(cfg, ctx):
    b = ctx.batch("equidistribution", tag="equidistribution", scheme="halfplane")
    t_flow = float(cfg.overrides.get("equidistribution", {}).get("t_flow", 1000.0))
    rep = modular.birkhoff_equidistribution(b, modular.cusp_indicator(2.0), t_flow)
    ok = abs(rep.mean - CUSP_TARGET) <= cfg.tolerances.equidistribution
    est = boundary_limit(b)
    rows = [[int(i), float(x), float(v), int(lc)]
            for i, x, v, lc in zip(b.path_ids, est.halfplane_x, rep.averages, rep.low_confidence)]
    rows.append(["summary", rep.mean, rep.std_error, ""])
    return ExperimentResult("equidistribution", bool(ok), {
        "mean": rep.mean, "std_error": rep.std_error, "target": CUSP_TARGET, "t_flow": t_flow,
        "tolerance": cfg.tolerances.equidistribution, "low_confidence": int(rep.low_confidence.sum()),
    }, ["path_id", "x_inf", "cusp_average", "low_confidence"], rows, rep)


def identity_estimates(b, model):
    """Increment estimators over [T/2, T] plus the kernel lambda0 and the endpoint sigma_kappa^2."""
    c = kernels.model_constants(model)
    inc = stats.Method.INCREMENT
    lg = kernels.log_green_function(model, b.radius_at())
    y = (lg + c.h * b.T) / math.sqrt(b.T)
    acc = stats.MomentAccumulator().add(y)
    sk = stats.EstimateWithCI(acc.variance, acc.variance * math.sqrt(2.0 / (acc.n - 1)), acc.n)
    return dict(
        h=stats.entropy_estimate(b, inc), ell=stats.drift_estimate(b, inc), lambda0=stats.bottom_of_spectrum(model),
        upsilon=stats.growth_estimate(b, inc), sigma_kappa_sq=sk, h_top=c.h_top,
    )


def run_identities(cfg, ctx):
    _constant(ctx, "the identity dashboard")
    b = ctx.batch("identities")
    est = identity_estimates(b, ctx.model)
    dash = stats.identity_dashboard(k=cfg.tolerances.band_k, **est)
    rows = [[c.name, c.lhs, c.rhs, c.band, c.status] for c in dash.checks]
    summary = {c.name: c.status for c in dash.checks}
    summary.update({k: v.value for k, v in est.items() if isinstance(v, stats.EstimateWithCI)})
    return ExperimentResult("identities", dash.passed, summary, ["identity", "lhs", "rhs", "band", "status"],
                            rows, dash)


# ---------------------------------------------------------------------------
# closed-form kernel checks


def kernel_normalization(d, t):
    """|int p A dr - 1| by adaptive quadrature."""
    m = ConstantCurvature(d, 1.0)
    hi = (d - 1) * t + 14.0 * math.sqrt(2.0 * t) + 10.0
    v, _ = integrate.quad(lambda r: float(kernels.radial_density(m, t, r)), 0.0, hi, epsabs=0.0,
                          epsrel=1e-11, limit=400)
    return abs(v - 1.0)


def kernel_pde_residual(d, t, r, h=1e-3):
    """Relative residual of d/dt p = p'' + (d-1) coth(r) p' by central differences."""
    m = ConstantCurvature(d, 1.0)

    def p(tt, rr):
        return float(kernels.heat_kernel(m, tt, rr))

    pt = (p(t + h, r) - p(t - h, r)) / (2 * h)
    pr = (p(t, r + h) - p(t, r - h)) / (2 * h)
    prr = (p(t, r + h) - 2 * p(t, r) + p(t, r - h)) / (h * h)
    lap = prr + (d - 1) / math.tanh(r) * pr
    scale = abs(prr) + abs((d - 1) / math.tanh(r) * pr) + abs(pt)
    return abs(pt - lap) / scale


@dataclass
class SelfCheck:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self):
        return self.value <= self.tolerance


def kernel_selfcheck(tol=None) -> list:
    """All closed-form kernel checks; no simulation."""
    from .config import Tolerances

    tol = tol or Tolerances()
    out = []
    for d in (2, 3):
        for t in (0.1, 1.0, 10.0):
            out.append(SelfCheck(f"normalization d={d} t={t}", kernel_normalization(d, t), tol.kernel_norm))
    for d in (2, 3):
        worst = max(kernel_pde_residual(d, t, r) for t in (0.5, 1.0, 3.0) for r in (0.5, 1.0, 2.0, 4.0))
        out.append(SelfCheck(f"heat equation residual d={d}", worst, tol.pde_residual))
    t_grid = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
    r_grid = np.linspace(0.05, 15.0, 40)
    for d in (2, 3):
        rep = kernels.comparison_check(1.0, 2.0, d, t_grid, r_grid)
        out.append(SelfCheck(f"comparison a=1 b=2 d={d} violations", float(rep.n_violations), 0.5))
    m3 = ConstantCurvature(3, 1.0)
    for r in (0.5, 2.0):
        g, _ = integrate.quad(lambda t: float(kernels.heat_kernel(m3, t, r)), 0, np.inf, epsabs=0, epsrel=1e-11)
        out.append(SelfCheck(f"Green = time integral d=3 r={r}", abs(g / kernels.green_function(m3, r) - 1), 1e-6))
    lam = stats.bottom_of_spectrum(m3)
    out.append(SelfCheck("lambda0 d=3 from diagonal decay", abs(lam.value - 1.0), 1e-6))
    return out


def run_kernel_checks(cfg, ctx):
    checks = kernel_selfcheck(cfg.tolerances)
    rows = [[c.name, c.value, c.tolerance, int(c.passed)] for c in checks]
    return ExperimentResult("kernel-checks", all(c.passed for c in checks),
                            {c.name: c.value for c in checks}, ["check", "value", "tolerance", "pass"], rows, checks)


RUNNERS = {
    "drift": run_drift,
    "entropy": run_entropy,
    "clt-distance": run_clt_distance,
    "clt-green": run_clt_green,
    "busemann": run_busemann,
    "contraction": run_contraction,
    "mixing": run_mixing,
    "harmonic-measure": run_harmonic_measure,
    "equidistribution": run_equidistribution,
    "kernel-checks": run_kernel_checks,
    "identities": run_identities,
}


def run_experiment(name, cfg, ctx):
    if name not in RUNNERS:
        raise ConfigError(f"unknown experiment {name!r}")
    t0 = time.perf_counter()
    res = RUNNERS[name](cfg, ctx)
    res.wall_time = time.perf_counter() - t0
    return res
