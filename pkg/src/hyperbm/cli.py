"""Command-line front end.

    hyperbm run [--config FILE] [flags] [--preset acceptance]
    hyperbm kernel-selfcheck
    hyperbm print-config-schema

Exit codes: 0 all asserted checks pass, 1 some check failed, 2 invalid
configuration, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import EXPERIMENTS, ExperimentConfig, schema
from .errors import ConfigError, NumericError, UnsupportedModelError
from .stats import _plain, fmt, write_csv

log = logging.getLogger("hyperbm")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> (config attribute, type)
FLAGS = {
    "model": ("model", str), "d": ("d", int), "a": ("a", float), "b": ("b", float),
    "warp_file": ("warp_file", str), "scheme": ("scheme", str), "T": ("T", float), "dt": ("dt", float),
    "n_paths": ("n_paths", int), "seed": ("master_seed", int), "output_dir": ("output_dir", str),
    "workers": ("workers", int), "record_every": ("record_every", int),
}


def build_parser():
    p = argparse.ArgumentParser(prog="hyperbm", description="Monte Carlo lab for hyperbolic Brownian motion")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run experiments")
    run.add_argument("--config", help="INI config file; flags override its values")
    run.add_argument("--preset", choices=["acceptance"], help="run the acceptance suite instead")
    for name, (_, typ) in FLAGS.items():
        run.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ)
    run.add_argument("--experiments", help=f"comma list of: {', '.join(EXPERIMENTS)}")
    run.add_argument("--criteria", help="acceptance preset: comma list of criterion numbers")
    sub.add_parser("kernel-selfcheck", help="closed-form kernel checks, no simulation")
    sub.add_parser("print-config-schema", help="print the config grammar")
    return p


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        kw = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    else:
        kw = {}
    for name, (attr, _) in FLAGS.items():
        v = getattr(args, name)
        if v is not None:
            kw[attr] = v
    if args.experiments:
        kw["experiments"] = [e.strip() for e in args.experiments.split(",") if e.strip()]
    if kw.get("model") in ("h2",) and "scheme" not in kw and not args.config:
        kw["scheme"] = "halfplane"
    return ExperimentConfig(**kw)


def versions():
    return {"hyperbm": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(cfg, wall, extra=None):
    m = {
        "config_ini": cfg.to_ini(), "config_canonical": cfg.canonical(), "config_hash": cfg.hash_hex,
        "master_seed": cfg.master_seed, "workers": cfg.workers, "versions": versions(), "wall_time_s": wall,
    }
    m.update(extra or {})
    return m


def run_experiments(cfg: ExperimentConfig) -> int:
    from .experiments import RunContext, run_experiment

    out = cfg.resolved_output_dir()
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    ctx = RunContext(cfg)
    results = {}
    for name in cfg.experiments:
        res = run_experiment(name, cfg, ctx)
        log.info("%-17s %s  (%.1f s)", name, "pass" if res.passed else "FAIL", res.wall_time)
        with open(os.path.join(out, f"{name}.csv"), "w", newline="") as fh:
            write_csv(fh, res.csv_header, res.csv_rows)
        results[name] = {"pass": bool(res.passed), "summary": _plain(res.summary)}
    wall = time.perf_counter() - t0
    _write_json(os.path.join(out, "summary.json"), {"config_hash": cfg.hash_hex, "experiments": results,
                                                    "all_pass": all(r["pass"] for r in results.values())})
    _write_json(os.path.join(out, "manifest.json"), _manifest(cfg, wall))
    return EXIT_OK if all(r["pass"] for r in results.values()) else EXIT_FAIL


def run_acceptance(cfg: ExperimentConfig, criteria=None) -> int:
    from .acceptance import run_all

    out = cfg.resolved_output_dir()
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    res = run_all(criteria, workers=cfg.workers, log=print)
    wall = time.perf_counter() - t0
    rows = [[r.number, r.title, int(r.passed), r.wall_time] for r in res]
    with open(os.path.join(out, "acceptance.csv"), "w", newline="") as fh:
        write_csv(fh, ["criterion", "title", "pass", "wall_time_s"], rows)
    summary = {"config_hash": cfg.hash_hex, "criteria": {
        str(r.number): {"title": r.title, "pass": bool(r.passed), "details": _plain(r.details)} for r in res}}
    summary["all_pass"] = all(r.passed for r in res)
    _write_json(os.path.join(out, "summary.json"), summary)
    _write_json(os.path.join(out, "manifest.json"), _manifest(cfg, wall, {"preset": "acceptance"}))
    return EXIT_OK if summary["all_pass"] else EXIT_FAIL


def kernel_selfcheck_cmd() -> int:
    from .experiments import kernel_selfcheck

    checks = kernel_selfcheck()
    for c in checks:
        print(f"{'pass' if c.passed else 'FAIL'}  {c.name}: {fmt(c.value)} (tolerance {fmt(c.tolerance)})")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "print-config-schema":
            print(schema(), end="")
            return EXIT_OK
        if args.command == "kernel-selfcheck":
            return kernel_selfcheck_cmd()
        cfg = config_from_args(args)
        if args.preset == "acceptance":
            crit = [int(c) for c in args.criteria.split(",")] if args.criteria else None
            return run_acceptance(cfg, crit)
        return run_experiments(cfg)
    except (ConfigError, UnsupportedModelError) as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        for k, v in getattr(e, "diagnostics", {}).items():
            print(f"  {k} = {v}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
