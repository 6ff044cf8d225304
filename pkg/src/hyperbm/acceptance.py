"""The twelve acceptance criteria, one function each, at their stated sizes and tolerances.

Every criterion uses MASTER_SEED, fixed before any result was seen.
Simulations shared between criteria are cached for the life of the process.
"""

from __future__ import annotations

import functools
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels, modular, stats
from .config import Tolerances
from .experiments import CUSP_TARGET, cauchy_cdf, identity_estimates, kernel_selfcheck
from .geometry import BoundaryPoint, distance_array, halfplane_boundary
from .models import ConstantCurvature
from .rng import RngPolicy
from .sampler import boundary_limit, simulate_halfplane, simulate_hyperboloid, simulate_polar

MASTER_SEED = 12345
TOL = Tolerances()
H2 = ConstantCurvature(2, 1.0)
H3 = ConstantCurvature(3, 1.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    wall_time: float = float("nan")

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        keys = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{flag}] criterion {self.number:2d} {self.title}: {keys}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.5g}"
    return str(v)


def _rng(tag):
    return RngPolicy(MASTER_SEED).with_stream(tag)


@functools.lru_cache(maxsize=None)
def _polar(d, T, n, tag, dt=0.01, workers=1):
    return simulate_polar(ConstantCurvature(d, 1.0), T, dt, n, _rng(tag), record_every=100, workers=workers)


@functools.lru_cache(maxsize=None)
def _halfplane(T, n, tag, dt=0.01, workers=1):
    return simulate_halfplane(T, dt, 1j, n, _rng(tag), record_every=100, workers=workers)


@functools.lru_cache(maxsize=None)
def _hyperboloid(d, T, n, tag, dt=0.005, workers=1):
    return simulate_hyperboloid(ConstantCurvature(d, 1.0), T, dt, n, _rng(tag), record_every=200,
                                workers=workers)


def _timed(fn):
    @functools.wraps(fn)
    def wrap(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.wall_time = time.perf_counter() - t0
        return res

    return wrap


# ---------------------------------------------------------------------------


@_timed
def criterion_1(workers=1):
    l3 = stats.drift_estimate(_polar(3, 100.0, 1000, "drift", workers=workers))
    l2 = stats.drift_estimate(_halfplane(100.0, 1000, "drift", workers=workers))
    ok = abs(l3.value - 2.0) <= TOL.drift and abs(l2.value - 1.0) <= TOL.drift
    return CriterionResult(1, "drift", ok, {"ell_H3": l3.value, "se_H3": l3.std_error, "ell_H2": l2.value,
                                            "se_H2": l2.std_error, "tol": TOL.drift})


@_timed
def criterion_2(workers=1):
    h3 = stats.entropy_estimate(_polar(3, 100.0, 1000, "drift", workers=workers))
    h2 = stats.entropy_estimate(_halfplane(100.0, 1000, "drift", workers=workers))
    ok = abs(h3.value - 4.0) <= TOL.entropy and abs(h2.value - 1.0) <= TOL.entropy
    return CriterionResult(2, "entropy", ok, {"h_H3": h3.value, "se_H3": h3.std_error, "h_H2": h2.value,
                                              "se_H2": h2.std_error, "tol": TOL.entropy})


def _clt_batch(workers=1):
    return _polar(3, 200.0, 5000, "clt", workers=workers)


@_timed
def criterion_3(workers=1):
    rep = stats.clt_test_distance(_clt_batch(workers), ks_threshold=TOL.ks, variance_rtol=TOL.variance_rtol)
    return CriterionResult(3, "CLT distance", rep.passed, {
        "ks": rep.ks_statistic, "ks_max": rep.ks_threshold, "var": rep.sigma_hat_sq, "var_range": "[1.8, 2.2]"})


@_timed
def criterion_4(workers=1):
    b = _clt_batch(workers)
    rep = stats.clt_test_green(b, ks_threshold=TOL.ks, variance_rtol=TOL.variance_rtol)
    h = stats.entropy_estimate(b)
    sk = stats.EstimateWithCI(rep.sigma_hat_sq, rep.sigma_hat_sq_se, rep.n_paths)
    ineq = stats.identity_dashboard(h=h, sigma_kappa_sq=sk, k=TOL.band_k).by_name("sigma_kappa^2 >= 2h")
    ok = rep.passed and ineq.status == "pass"
    return CriterionResult(4, "CLT Green", ok, {
        "ks": rep.ks_statistic, "ks_max": rep.ks_threshold, "var": rep.sigma_hat_sq, "var_range": "[7.2, 8.8]",
        "sigma_kappa_ge_2h": ineq.status})


@_timed
def criterion_5(workers=1):
    b3 = _polar(3, 20.0, 1000, "busemann", workers=workers)
    xi = BoundaryPoint(np.array([1.0, 0.6, 0.0, 0.8]))
    rep = stats.busemann_drift_test(b3, xi, TOL.busemann)
    b2 = _halfplane(20.0, 1000, "busemann", workers=workers)
    lh = stats.halfplane_log_height(b2)
    exact_ok = abs(lh.value - b2.T) <= TOL.band_k * lh.std_error
    return CriterionResult(5, "Busemann drift", rep.passed and exact_ok, {
        "E_b_over_T": rep.per_time, "tol": TOL.busemann, "E_minus_log_y": lh.value, "se": lh.std_error, "T": b2.T})


@_timed
def criterion_6(workers=1, tau=0.3):
    b = _halfplane(5.0, 10_000, "contraction", workers=workers)
    rep = stats.contraction_test(b, halfplane_boundary(0.0), halfplane_boundary(math.inf), tau)
    return CriterionResult(6, "Gromov contraction", rep.passed, {
        "gain": rep.gain.value, "se": rep.gain.std_error, "bound": rep.predicted_gain,
        "visual_ratio": rep.ratio.value, "tau": tau, "fitted_rate": rep.fitted_rate})


def radial_ks(batch, model, T):
    return stats.ks_statistic(batch.radius_at(T), kernels.radial_cdf(model, T))


@_timed
def criterion_7(workers=1):
    checks = kernel_selfcheck(TOL)
    ks3 = radial_ks(_polar(3, 5.0, 10_000, "radial", workers=workers), H3, 5.0)
    ks2 = radial_ks(_halfplane(5.0, 10_000, "radial", workers=workers), H2, 5.0)
    failed = [c.name for c in checks if not c.passed]
    ok = not failed and ks3 <= TOL.radial_ks and ks2 <= TOL.radial_ks
    return CriterionResult(7, "heat kernel library", ok, {
        "closed_form_checks": f"{len(checks) - len(failed)}/{len(checks)}", "radial_ks_H3": ks3,
        "radial_ks_H2": ks2, "ks_max": TOL.radial_ks})


def martin_errors(n=100, dist=200.0, seed=MASTER_SEED):
    """Relative error of G(y, z)/G(x, z) against k(x, y, xi) with z at distance ``dist`` towards xi."""
    rs = np.random.default_rng([seed, 8])
    errs = np.empty(n)
    for i in range(n):
        u = rs.normal(size=3)
        u /= np.linalg.norm(u)
        xi = np.concatenate([[1.0], u])
        pts = []
        for _ in range(2):
            v = rs.normal(size=3)
            v /= np.linalg.norm(v)
            r = rs.uniform(0.0, 3.0)
            pts.append(np.concatenate([[math.cosh(r)], math.sinh(r) * v]))
        x, y = pts
        z = np.concatenate([[math.cosh(dist)], math.sinh(dist) * u])
        lg = kernels.log_green_function(H3, np.array([distance_array(y, z), distance_array(x, z)]))
        ratio = math.exp(lg[0] - lg[1])
        k = float(kernels.martin_kernel(H3, x, y, xi))
        errs[i] = abs(ratio - k) / k
    return errs


@_timed
def criterion_8(workers=1):
    e = martin_errors()
    return CriterionResult(8, "Martin kernel", bool(e.max() <= TOL.martin), {
        "max_rel_err": float(e.max()), "tol": TOL.martin, "n": e.size})


@_timed
def criterion_9(workers=1):
    b = _halfplane(30.0, 10_000, "harmonic", workers=workers)
    est = boundary_limit(b)
    ks = stats.ks_statistic(est.halfplane_x, cauchy_cdf)
    return CriterionResult(9, "harmonic measure", ks <= TOL.harmonic_ks, {
        "ks": ks, "ks_max": TOL.harmonic_ks, "low_confidence": int(est.low_confidence.sum())})


@_timed
def criterion_10(workers=1):
    part = modular.PartitionSpec.default()
    rep = modular.mixing_tv(np.arange(0.0, 21.0), 100_000, part, dt=0.01, rng=_rng("mixing"), workers=workers)
    end_ok = rep.tv[-1] <= rep.noise_floor + TOL.mixing_excess
    mono = rep.monotone(2.0)
    return CriterionResult(10, "Doeblin mixing", bool(end_ok and mono), {
        "tv_20": float(rep.tv[-1]), "noise_floor": rep.noise_floor, "monotone_2_20": mono,
        "fitted_rate": rep.fitted_rate, "cells": part.n_cells})


def dashboard(batch, model):
    return stats.identity_dashboard(k=TOL.band_k, **identity_estimates(batch, model))


@_timed
def criterion_11(workers=1):
    b = _halfplane(30.0, 200, "equidistribution", workers=workers)
    eq = modular.birkhoff_equidistribution(b, modular.cusp_indicator(2.0), 1000.0)
    eq_ok = abs(eq.mean - CUSP_TARGET) <= TOL.equidistribution
    d3 = dashboard(_polar(3, 100.0, 1000, "drift", workers=workers), H3)
    d2 = dashboard(_halfplane(100.0, 1000, "drift", workers=workers), H2)
    details = {"cusp_average": eq.mean, "target": CUSP_TARGET, "tol": TOL.equidistribution}
    for tag, dash in (("H3", d3), ("H2", d2)):
        for c in dash.checks:
            if c.kind == "eq":
                details[f"{tag}:{c.name}"] = c.status
    eqs_ok = all(c.status == "pass" for dash in (d3, d2) for c in dash.checks if c.kind == "eq")
    return CriterionResult(11, "equidistribution and identities", bool(eq_ok and eqs_ok), details)


ENGINEERING_INI = """[model]
kind = h3
[run]
scheme = polar
T = 2.0
dt = 0.01
n_paths = 5000
master_seed = 12345
experiments = drift, busemann
record_every = 50
"""


def _cli_csvs(ini_path, out, workers):
    env = dict(os.environ)
    env.pop("HYPERBM_OUTPUT_DIR", None)
    cmd = [sys.executable, "-m", "hyperbm.cli", "run", "--config", ini_path, "--workers", str(workers),
           "--output-dir", out]
    proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
    if proc.returncode != 0:
        raise RuntimeError(f"cli run failed ({proc.returncode}): {proc.stderr}")
    return {f: open(os.path.join(out, f), "rb").read() for f in sorted(os.listdir(out)) if f.endswith(".csv")}


def rerun_identical(workers=(1, 3)):
    """Run the same config through the CLI at several worker counts; compare CSV bytes."""
    with tempfile.TemporaryDirectory() as tmp:
        ini = os.path.join(tmp, "run.ini")
        with open(ini, "w") as fh:
            fh.write(ENGINEERING_INI)
        outs = [_cli_csvs(ini, os.path.join(tmp, f"out{i}"), w) for i, w in enumerate(workers)]
    return all(o == outs[0] for o in outs[1:]) and bool(outs[0])


def cross_scheme_ks(workers=1):
    """Pairwise two-sample KS of r_5 across schemes."""
    T, n = 5.0, 10_000
    hp = _halfplane(T, n, "cross", workers=workers).radius_at(T)
    p2 = _polar(2, T, n, "cross", workers=workers).radius_at(T)
    y2 = _hyperboloid(2, T, n, "cross", workers=workers).radius_at(T)
    p3 = _polar(3, T, n, "cross", workers=workers).radius_at(T)
    y3 = _hyperboloid(3, T, n, "cross", workers=workers).radius_at(T)
    return {
        "H2 halfplane-polar": stats.ks_two_sample(hp, p2),
        "H2 halfplane-hyperboloid": stats.ks_two_sample(hp, y2),
        "H2 polar-hyperboloid": stats.ks_two_sample(p2, y2),
        "H3 polar-hyperboloid": stats.ks_two_sample(p3, y3),
    }


@_timed
def criterion_12(workers=1):
    same = rerun_identical()
    ks = cross_scheme_ks(workers)
    ok = same and max(ks.values()) <= TOL.cross_scheme_ks
    details = {"bit_identical_workers_1_3": same}
    details.update(ks)
    return CriterionResult(12, "engineering", ok, details)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 13)}


def run_all(numbers=None, workers=1, log=print):
    out = []
    for i in numbers or sorted(CRITERIA):
        res = CRITERIA[i](workers=workers)
        if log:
            log(res.line())
        out.append(res)
    return out
