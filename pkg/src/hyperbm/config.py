"""Experiment configuration: INI files and command-line flags, validated up front.

Canonical form (what the config hash covers): every hashed field as one
``key=value`` line, keys sorted, floats written with ``repr``, lists joined
with commas, per-experiment overrides as ``<experiment>.<key>=value``.  The
hash is 64-bit FNV-1a of the UTF-8 bytes.  The output directory and the
worker count are excluded because they never change an emitted number.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .rng import fnv1a_64

OUTPUT_ENV = "HYPERBM_OUTPUT_DIR"

EXPERIMENTS = (
    "drift", "entropy", "clt-distance", "clt-green", "busemann", "contraction", "mixing",
    "harmonic-measure", "equidistribution", "kernel-checks", "identities",
)
MODEL_KINDS = ("h2", "h3", "hd", "rotsym")
SCHEMES = ("polar", "halfplane", "hyperboloid")
OVERRIDABLE = ("T", "dt", "n_paths", "scheme", "t_flow")


@dataclass
class Tolerances:
    drift: float = 0.02
    entropy: float = 0.10
    ks: float = 0.03
    variance_rtol: float = 0.10
    busemann: float = 0.03
    harmonic_ks: float = 0.02
    radial_ks: float = 0.02
    cross_scheme_ks: float = 0.03
    mixing_excess: float = 0.02
    equidistribution: float = 0.02
    band_k: float = 3.0
    kernel_norm: float = 1e-6
    pde_residual: float = 1e-5
    martin: float = 0.01


@dataclass
class ExperimentConfig:
    model: str = "h3"
    d: int = 3
    a: float = 1.0
    b: float = None  # upper pinching constant, rotsym only
    warp_file: str = None
    scheme: str = "polar"
    T: float = 10.0
    dt: float = 0.01
    n_paths: int = 1000
    master_seed: int = 12345
    experiments: list = field(default_factory=lambda: ["drift"])
    tolerances: Tolerances = field(default_factory=Tolerances)
    overrides: dict = field(default_factory=dict)  # experiment -> {key: value}
    output_dir: str = "hyperbm-out"
    workers: int = 1
    record_every: int = 100

    def __post_init__(self):
        self.validate()

    # -- validation -------------------------------------------------------

    def validate(self):
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.model == "h2":
            self.d = 2
        elif self.model == "h3":
            self.d = 3
        if self.model == "rotsym":
            self.d = 2
            if self.b is None or self.warp_file is None:
                raise ConfigError("rotsym models need b and warp_file")
            if not 0 < self.a <= self.b:
                raise ConfigError("rotsym models need 0 < a <= b")
            if self.scheme != "polar":
                raise ConfigError("rotsym models run only under the polar scheme")
        if not (isinstance(self.d, int) and self.d >= 2):
            raise ConfigError(f"d must be an integer >= 2, got {self.d!r}")
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError("a must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.scheme == "halfplane" and (self.d != 2 or self.a != 1.0):
            raise ConfigError("the half-plane scheme is for H^2(-1) only")
        for name in ("T", "dt"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite")
        if not (isinstance(self.n_paths, int) and self.n_paths >= 1):
            raise ConfigError("n_paths must be a positive integer")
        if not (isinstance(self.master_seed, int) and 0 <= self.master_seed < 2**64):
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers must be a positive integer")
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            raise ConfigError("record_every must be a positive integer")
        bad = [e for e in self.experiments if e not in EXPERIMENTS]
        if bad or not self.experiments:
            raise ConfigError(f"unknown or empty experiment list: {bad or self.experiments}")
        for exp, ov in self.overrides.items():
            if exp not in EXPERIMENTS:
                raise ConfigError(f"override section for unknown experiment {exp!r}")
            for k in ov:
                if k not in OVERRIDABLE:
                    raise ConfigError(f"{k!r} cannot be overridden per experiment")
        for f in dataclasses.fields(self.tolerances):
            v = getattr(self.tolerances, f.name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"tolerance {f.name} must be positive")

    def setting(self, experiment, key):
        return self.overrides.get(experiment, {}).get(key, getattr(self, key, None))

    # -- canonical form and hash -------------------------------------------

    def canonical(self):
        items = {
            "model": self.model, "d": self.d, "a": self.a, "b": self.b, "warp_file": self.warp_file,
            "scheme": self.scheme, "T": self.T, "dt": self.dt, "n_paths": self.n_paths,
            "master_seed": self.master_seed, "experiments": ",".join(self.experiments),
            "record_every": self.record_every,
        }
        for f in dataclasses.fields(self.tolerances):
            items[f"tolerances.{f.name}"] = getattr(self.tolerances, f.name)
        for exp, ov in self.overrides.items():
            for k, v in ov.items():
                items[f"{exp}.{k}"] = v
        lines = [f"{k}={_canon(v)}" for k, v in sorted(items.items())]
        return "\n".join(lines) + "\n"

    @property
    def hash(self):
        return fnv1a_64(self.canonical())

    @property
    def hash_hex(self):
        return f"{self.hash:016x}"

    def resolved_output_dir(self):
        return os.environ.get(OUTPUT_ENV) or self.output_dir

    # -- INI ------------------------------------------------------------------

    def to_ini(self):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp["model"] = {"kind": self.model, "d": str(self.d), "a": repr(self.a)}
        if self.b is not None:
            cp["model"]["b"] = repr(self.b)
        if self.warp_file is not None:
            cp["model"]["warp_file"] = self.warp_file
        cp["run"] = {
            "scheme": self.scheme, "T": repr(self.T), "dt": repr(self.dt), "n_paths": str(self.n_paths),
            "master_seed": str(self.master_seed), "experiments": ", ".join(self.experiments),
            "output_dir": self.output_dir, "workers": str(self.workers), "record_every": str(self.record_every),
        }
        cp["tolerances"] = {f.name: repr(getattr(self.tolerances, f.name)) for f in dataclasses.fields(Tolerances)}
        for exp, ov in self.overrides.items():
            cp[f"experiment.{exp}"] = {k: _canon(v) for k, v in ov.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        known = {"model", "run", "tolerances"}
        kw = {}
        if cp.has_section("model"):
            s = cp["model"]
            _only(s, {"kind", "d", "a", "b", "warp_file"}, "model")
            kw["model"] = s.get("kind", "h3")
            for k, conv in (("d", int), ("a", float), ("b", float)):
                if k in s:
                    kw[k] = _conv(conv, s[k], k)
            if "warp_file" in s:
                kw["warp_file"] = s["warp_file"]
        if cp.has_section("run"):
            s = cp["run"]
            convs = {"scheme": str, "T": float, "dt": float, "n_paths": int, "master_seed": int,
                     "output_dir": str, "workers": int, "record_every": int}
            _only(s, set(convs) | {"experiments"}, "run")
            for k, conv in convs.items():
                if k in s:
                    kw[k] = _conv(conv, s[k], k)
            if "experiments" in s:
                kw["experiments"] = [e.strip() for e in s["experiments"].split(",") if e.strip()]
        if cp.has_section("tolerances"):
            names = {f.name for f in dataclasses.fields(Tolerances)}
            _only(cp["tolerances"], names, "tolerances")
            kw["tolerances"] = Tolerances(**{k: _conv(float, v, k) for k, v in cp["tolerances"].items()})
        overrides = {}
        for sec in cp.sections():
            if sec.startswith("experiment."):
                exp = sec.split(".", 1)[1]
                overrides[exp] = {k: _override_value(k, v) for k, v in cp[sec].items()}
            elif sec not in known:
                raise ConfigError(f"unknown section [{sec}]")
        kw["overrides"] = overrides
        return cls(**kw)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_ini(fh.read())


def _canon(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _conv(conv, text, key):
    try:
        return conv(text.strip())
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {text!r}") from None


def _override_value(k, v):
    conv = {"T": float, "dt": float, "n_paths": int, "scheme": str, "t_flow": float}.get(k)
    if conv is None:
        raise ConfigError(f"{k!r} cannot be overridden per experiment")
    return _conv(conv, v, k)


def _only(section, allowed, name):
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")


def schema():
    """Human-readable grammar of the INI config."""
    tol = "\n".join(f"  {f.name} = <float, default {f.default!r}>" for f in dataclasses.fields(Tolerances))
    return f"""[model]
  kind = {' | '.join(MODEL_KINDS)}
  d = <int >= 2; forced to 2 for h2 and rotsym, 3 for h3>
  a = <float > 0, curvature -a^2 (lower pinching constant for rotsym)>
  b = <float >= a, rotsym only>
  warp_file = <path to a two-column r f(r) grid, rotsym only>
[run]
  scheme = {' | '.join(SCHEMES)}
  T = <float > 0, a multiple of dt>
  dt = <float > 0>
  n_paths = <int >= 1>
  master_seed = <unsigned 64-bit int>
  experiments = <comma list of: {', '.join(EXPERIMENTS)}>
  output_dir = <path; the {OUTPUT_ENV} environment variable takes precedence>
  workers = <int >= 1; never changes results>
  record_every = <int >= 1, steps between recorded states>
[tolerances]
{tol}
[experiment.<name>]
  {' | '.join(OVERRIDABLE)} = <per-experiment override of the [run] value>
"""
