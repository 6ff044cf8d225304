import io
import math

import pytest

from hyperbm.config import EXPERIMENTS, ExperimentConfig
from hyperbm.errors import ConfigError, UnsupportedModelError
from hyperbm.experiments import (
    RUNNERS, RunContext, cauchy_cdf, kernel_normalization, kernel_pde_residual, kernel_selfcheck, run_experiment,
)
from hyperbm.stats import write_csv


def run(name, **kw):
    cfg = ExperimentConfig(experiments=[name], **kw)
    return run_experiment(name, cfg, RunContext(cfg))


def test_every_experiment_has_a_runner():
    assert set(RUNNERS) == set(EXPERIMENTS)
    with pytest.raises(ConfigError):
        run_experiment("nope", ExperimentConfig(), None)


@pytest.mark.parametrize("name,kw", [
    ("drift", dict(model="h3", T=10.0, n_paths=300)),
    ("drift", dict(model="h2", scheme="hyperboloid", T=10.0, dt=0.005, n_paths=300)),
    ("entropy", dict(model="h3", T=10.0, n_paths=400)),
    ("busemann", dict(model="h2", scheme="halfplane", T=10.0, n_paths=500)),
    ("contraction", dict(model="h3", T=5.0, n_paths=500)),
    ("harmonic-measure", dict(model="h2", scheme="halfplane", T=10.0, n_paths=10_000)),
    ("mixing", dict(model="h2", scheme="halfplane", T=3.0, n_paths=10_000)),
    ("identities", dict(model="h3", T=20.0, n_paths=1000)),
    ("kernel-checks", dict()),
])
def test_runner_passes_at_adequate_size(name, kw):
    res = run(name, **kw)
    assert res.passed, res.summary
    assert res.name == name and res.wall_time >= 0
    buf = io.StringIO()
    write_csv(buf, res.csv_header, res.csv_rows)
    assert buf.getvalue().splitlines()[0] == ",".join(res.csv_header)


def test_equidistribution_runner_short_flow():
    res = run("equidistribution", model="h2", scheme="halfplane", T=10.0, n_paths=200,
              overrides={"equidistribution": {"t_flow": 50.0}})
    assert res.summary["t_flow"] == 50.0
    assert abs(res.summary["mean"] - 1.5 / math.pi) < 0.1
    assert len(res.csv_rows) == 201


def test_clt_runners_report_structure():
    # T = 50 is short enough that the centring bias shows; only the report shape is checked here
    cfg = ExperimentConfig(model="h3", T=50.0, n_paths=1000, experiments=["clt-distance", "clt-green"])
    ctx = RunContext(cfg)
    d = run_experiment("clt-distance", cfg, ctx)
    g = run_experiment("clt-green", cfg, ctx)
    assert d.summary["predicted_sigma_sq"] == 2.0 and g.summary["predicted_sigma_sq"] == 8.0
    assert abs(d.summary["sigma_hat_sq"] / 2.0 - 1) < 0.15
    assert g.summary["sigma_kappa_ge_2h"] is True
    assert len(d.csv_rows) >= 1000


def test_batches_are_shared_within_a_run():
    cfg = ExperimentConfig(model="h3", T=2.0, n_paths=100, experiments=["drift", "entropy"])
    ctx = RunContext(cfg)
    assert ctx.batch("drift") is ctx.batch("drift")


def test_unsupported_experiments_raise(tmp_path):
    with pytest.raises(ConfigError):
        run("mixing", model="h2", scheme="halfplane", T=2.0, n_paths=100)
    from hyperbm.models import RotSym, warp_grid

    r, f = warp_grid(lambda r: 1.0, r_max=50.0)
    warp = tmp_path / "w.txt"
    RotSym(r, f, 1.0, 1.0).save(warp)
    for name in ("entropy", "busemann", "contraction", "identities"):
        with pytest.raises(UnsupportedModelError):
            run(name, model="rotsym", a=1.0, b=1.0, warp_file=str(warp), T=2.0, n_paths=50)


def test_kernel_helpers():
    assert cauchy_cdf(0.0) == 0.5 and cauchy_cdf(1.0) == pytest.approx(0.75)
    for d in (2, 3):
        assert kernel_normalization(d, 1.0) < 1e-6
        assert kernel_pde_residual(d, 1.0, 1.0) < 1e-5
    checks = kernel_selfcheck()
    assert len(checks) == 13 and all(c.passed for c in checks)
