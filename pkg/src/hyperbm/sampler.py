"""Brownian paths for the generator Laplacian (not Laplacian / 2).

Three schemes:

* ``halfplane``: H^2 in the upper half-plane.  log Y is exact in law
  (d log Y = sqrt(2) dW2 - dt); X moves by sqrt(2) * Ybar * dW1 with Ybar the
  geometric midpoint of Y over the step.
* ``polar``: polar coordinates about the pole for any ConstantCurvature or
  RotSym model.  The radius takes the exact Bessel step for the singular part
  (d-1)/r of the drift plus an Euler step for the bounded remainder; the
  transverse noise of the same d-dimensional Gaussian drives the direction.
* ``hyperboloid``: ambient Euler step in the spatial coordinates of the
  hyperboloid, with x0 recomputed from the sheet equation (exact reprojection;
  the scheme has O(dt) weak error).

Paths are simulated in vectorised blocks (see ``rng.RngPolicy``); states are
stored every ``record_every`` steps and always at the final time.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, UnsupportedModelError
from .geometry import (
    BoundaryPoint,
    halfplane_boundary_array,
    halfplane_distance_array,
    halfplane_distance_from_i,
    origin,
)
from .models import ConstantCurvature, RotSym
from .rng import RngPolicy

R_FLOOR = 1e-3
DEFAULT_R0 = 0.1


class Scheme(str, Enum):
    HALFPLANE = "halfplane"
    POLAR = "polar"
    HYPERBOLOID = "hyperboloid"


SCHEME_CODES = {Scheme.HALFPLANE: 0, Scheme.POLAR: 1, Scheme.HYPERBOLOID: 2}


@dataclass
class Path:
    """One sampled trajectory (a view into a PathBatch)."""

    scheme: Scheme
    times: np.ndarray
    states: np.ndarray
    radial: np.ndarray
    seed: int
    path_id: int


@dataclass
class PathBatch:
    """Recorded states of many independent paths.

    ``states`` has shape (K, N) complex for the half-plane scheme, (K, N, d)
    unit directions for the polar scheme and (K, N, d+1) hyperboloid
    coordinates for the ambient scheme.  ``radial`` (K, N) is the distance from
    the starting point (from the pole for the polar scheme).
    """

    scheme: Scheme
    model: object
    times: np.ndarray
    states: np.ndarray
    radial: np.ndarray
    path_ids: np.ndarray
    seed: int
    dt: float
    valid: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.path_ids.size

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def n_excluded(self):
        return int(np.sum(~self.valid))

    def index_of(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"time {t} was not recorded")
        return k

    def radius_at(self, t=None):
        k = -1 if t is None else self.index_of(t)
        return self.radial[k][self.valid]

    def path(self, i) -> Path:
        return Path(self.scheme, self.times, self.states[:, i], self.radial[:, i], self.seed, int(self.path_ids[i]))

    def subset(self, mask):
        return PathBatch(
            self.scheme, self.model, self.times, self.states[:, mask], self.radial[:, mask],
            self.path_ids[mask], self.seed, self.dt, self.valid[mask], dict(self.meta),
        )

    def hyperboloid_points(self, k=-1):
        """Positions at record k as hyperboloid coordinates (constant curvature only)."""
        from .geometry import halfplane_to_hyperboloid_array, polar_to_hyperboloid

        if self.scheme is Scheme.HALFPLANE:
            return halfplane_to_hyperboloid_array(self.states[k])
        if self.scheme is Scheme.POLAR:
            if not isinstance(self.model, ConstantCurvature):
                raise UnsupportedModelError("RotSym paths have no hyperboloid embedding")
            return polar_to_hyperboloid(self.radial[k], self.states[k], self.model.a)
        return self.states[k]


def merge_batches(batches):
    """Concatenate blocks along the path axis, in the given order."""
    first = batches[0]
    return PathBatch(
        first.scheme, first.model, first.times,
        np.concatenate([b.states for b in batches], axis=1),
        np.concatenate([b.radial for b in batches], axis=1),
        np.concatenate([b.path_ids for b in batches]),
        first.seed, first.dt,
        np.concatenate([b.valid for b in batches]),
        dict(first.meta),
    )


# ---------------------------------------------------------------------------
# helpers


def _n_steps(T, dt, dt_max):
    if not dt > 0 or dt > dt_max + 1e-15:
        raise ConfigError(f"dt must lie in (0, {dt_max}], got {dt}")
    if not T >= 0:
        raise ConfigError("T must be nonnegative")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T = {T} is not a multiple of dt = {dt}")
    return n


def _record_steps(n_steps, record_every):
    if record_every < 1:
        raise ConfigError("record_every must be >= 1")
    steps = list(range(0, n_steps + 1, record_every))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return np.array(steps)


def _run(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _draw(gen, policy, shape, offset, n):
    """Full-width block draw; the path keeps its column regardless of n."""
    z = gen.standard_normal(shape + (policy.block_size,))
    return z[..., offset:offset + n]


# ---------------------------------------------------------------------------
# half-plane scheme


def _halfplane_block(policy, block, first, n, T, dt, z0, record_every, fold):
    gen = policy.block_generator(block)
    off = first - block * policy.block_size
    n_steps = _n_steps(T, dt, 0.01)
    rec = _record_steps(n_steps, record_every)
    x = np.full(n, z0.real)
    ly = np.full(n, math.log(z0.imag))
    states = np.empty((rec.size, n), dtype=complex)
    radial = np.empty((rec.size, n))
    sq = math.sqrt(2.0 * dt)
    j = 0

    def store(j):
        z = x + 1j * np.exp(ly)
        states[j] = z
        if fold is None:
            if z0 == 1j:
                radial[j] = halfplane_distance_from_i(x, ly)
            else:
                radial[j] = halfplane_distance_array(z, z0)
        else:
            radial[j] = np.nan

    store(0)
    j = 1
    for step in range(1, n_steps + 1):
        w = _draw(gen, policy, (2,), off, n)
        ly_new = ly + sq * w[1] - dt
        x = x + sq * np.exp(0.5 * (ly + ly_new)) * w[0]
        ly = ly_new
        if j < rec.size and step == rec[j]:
            if fold is not None:
                z = fold(x + 1j * np.exp(ly))
                x, ly = z.real, np.log(z.imag)
            store(j)
            j += 1
    ids = np.arange(first, first + n)
    return PathBatch(Scheme.HALFPLANE, ConstantCurvature(2, 1.0), rec * dt, states, radial, ids,
                     policy.master_seed, dt, np.ones(n, bool))


def simulate_halfplane(T, dt, z0=1j, n_paths=1000, rng: RngPolicy = None, record_every=10,
                       workers=1, first_path=0, fold=None) -> PathBatch:
    """H^2(-1) paths in the upper half-plane started at z0.

    ``fold`` (a picklable array function, e.g. ``modular.reduce_array``) is
    applied to the state at every record; it is how quotient paths are run.
    """
    z0 = complex(z0)
    if not z0.imag > 0:
        raise ConfigError("start point must have Im z0 > 0")
    _n_steps(T, dt, 0.01)
    rng = rng or RngPolicy(0)
    jobs = [(rng, b, f, n, T, dt, z0, record_every, fold) for b, f, n in rng.blocks(n_paths, first_path)]
    out = merge_batches(_run(_halfplane_block, jobs, workers))
    out.meta.update(z0=z0, folded=fold is not None)
    return out


# ---------------------------------------------------------------------------
# polar scheme


def _polar_block(policy, block, first, n, model, T, dt, r0, record_every):
    gen = policy.block_generator(block)
    off = first - block * policy.block_size
    d = model.d
    n_steps = _n_steps(T, dt, 0.01)
    rec = _record_steps(n_steps, record_every)
    r = np.full(n, float(r0))
    u = np.zeros((n, d))
    u[:, 0] = 1.0
    valid = np.ones(n, bool)
    r_max = getattr(model, "r_max", math.inf)
    states = np.empty((rec.size, n, d))
    radial = np.empty((rec.size, n))
    states[0], radial[0] = u, r
    sq = math.sqrt(2.0 * dt)
    j = 1
    for step in range(1, n_steps + 1):
        z = _draw(gen, policy, (d,), off, n).T
        z1 = np.einsum("ij,ij->i", z, u)
        zp = z - z1[:, None] * u
        inv_s = np.exp(-model.log_warp(r))
        r_new = np.sqrt((r + sq * z1) ** 2 + sq * sq * np.einsum("ij,ij->i", zp, zp))
        r_new = r_new + model.regular_drift(r) * dt
        r_new = np.where(r_new < R_FLOOR, 2.0 * R_FLOOR - r_new, r_new)
        u = u + (sq * inv_s)[:, None] * zp
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        out = r_new > r_max
        if out.any():
            valid &= ~out
            r_new = np.where(out, r_max, r_new)
        r = r_new
        if j < rec.size and step == rec[j]:
            states[j], radial[j] = u, r
            j += 1
    ids = np.arange(first, first + n)
    return PathBatch(Scheme.POLAR, model, rec * dt, states, radial, ids, policy.master_seed, dt, valid)


def simulate_polar(model, T, dt, n_paths=1000, rng: RngPolicy = None, r0=DEFAULT_R0, record_every=10,
                   workers=1, first_path=0) -> PathBatch:
    """Polar-coordinate paths about the pole, started at exp_o(r0 e1).

    Paths that leave r_max (RotSym) are flagged in ``valid`` and excluded by the
    estimators; their count is ``batch.n_excluded``.
    """
    if not isinstance(model, (ConstantCurvature, RotSym)):
        raise UnsupportedModelError(f"unknown model {model!r}")
    if not r0 > 0:
        raise ConfigError("r0 must be positive")
    _n_steps(T, dt, 0.01)
    rng = rng or RngPolicy(0)
    jobs = [(rng, b, f, n, model, T, dt, r0, record_every) for b, f, n in rng.blocks(n_paths, first_path)]
    out = merge_batches(_run(_polar_block, jobs, workers))
    out.meta.update(r0=r0)
    return out


# ---------------------------------------------------------------------------
# hyperboloid scheme


def _hyperboloid_block(policy, block, first, n, model, T, dt, record_every):
    gen = policy.block_generator(block)
    off = first - block * policy.block_size
    d, a = model.d, model.a
    n_steps = _n_steps(T, dt, 0.005)
    rec = _record_steps(n_steps, record_every)
    xs = np.zeros((n, d))  # spatial coordinates; x0 follows from the sheet equation
    states = np.empty((rec.size, n, d + 1))
    radial = np.empty((rec.size, n))

    def store(j):
        states[j, :, 1:] = xs
        states[j, :, 0] = np.sqrt(1.0 / a**2 + np.einsum("ij,ij->i", xs, xs))
        radial[j] = np.arcsinh(a * np.linalg.norm(xs, axis=1)) / a

    store(0)
    sq = math.sqrt(2.0 * dt)
    j = 1
    for step in range(1, n_steps + 1):
        z = _draw(gen, policy, (d,), off, n).T
        ys = a * xs
        y0 = np.sqrt(1.0 + np.einsum("ij,ij->i", ys, ys))
        ip = np.einsum("ij,ij->i", ys, z)
        # spatial part of the boost of (0, z) from the origin to y
        tang = z + (ip / (1.0 + y0))[:, None] * ys
        xs = xs + sq * tang + (d * a * a * dt) * xs
        if j < rec.size and step == rec[j]:
            store(j)
            j += 1
    ids = np.arange(first, first + n)
    return PathBatch(Scheme.HYPERBOLOID, model, rec * dt, states, radial, ids, policy.master_seed, dt,
                     np.ones(n, bool))


def simulate_hyperboloid(model: ConstantCurvature, T, dt, n_paths=1000, rng: RngPolicy = None, record_every=10,
                         workers=1, first_path=0) -> PathBatch:
    """Ambient Euler paths on the hyperboloid started at the origin."""
    if not isinstance(model, ConstantCurvature):
        raise UnsupportedModelError("the hyperboloid scheme needs constant curvature")
    _n_steps(T, dt, 0.005)
    rng = rng or RngPolicy(0)
    jobs = [(rng, b, f, n, model, T, dt, record_every) for b, f, n in rng.blocks(n_paths, first_path)]
    return merge_batches(_run(_hyperboloid_block, jobs, workers))


# ---------------------------------------------------------------------------
# boundary limits


@dataclass
class BoundaryEstimate:
    directions: np.ndarray  # (N, d+1) null vectors with xi0 = 1
    T: float
    r_T: np.ndarray
    low_confidence: np.ndarray
    halfplane_x: np.ndarray = None  # real boundary coordinate (half-plane scheme)

    def point(self, i) -> BoundaryPoint:
        return BoundaryPoint(self.directions[i])


def _drift_prediction(model):
    if isinstance(model, ConstantCurvature):
        return (model.d - 1) * model.a
    return model.a  # RotSym: comparison lower bound


def boundary_limit(batch: PathBatch, k=-1) -> BoundaryEstimate:
    """Boundary point read from the final direction (polar/ambient) or X_T (half-plane).

    Estimates with r_T < 0.8 * ell * T are flagged low-confidence.
    """
    T = float(batch.times[k])
    r = batch.radial[k]
    hx = None
    if batch.scheme is Scheme.HALFPLANE:
        hx = batch.states[k].real
        dirs = halfplane_boundary_array(hx)
        if batch.meta.get("z0", 1j) != 1j:
            r = halfplane_distance_array(batch.states[k], 1j)
    elif batch.scheme is Scheme.POLAR:
        dirs = np.concatenate([np.ones((batch.n_paths, 1)), batch.states[k]], axis=1)
    else:
        xs = batch.states[k][:, 1:]
        nrm = np.linalg.norm(xs, axis=1, keepdims=True)
        dirs = np.concatenate([np.ones((batch.n_paths, 1)), xs / np.where(nrm > 0, nrm, 1.0)], axis=1)
    low = r < 0.8 * _drift_prediction(batch.model) * T
    return BoundaryEstimate(dirs, T, r, low, hx)


# ---------------------------------------------------------------------------
# binary dump


_MAGIC = b"HBMP"
_HEADER = struct.Struct("<4sHQBQQH")  # magic, version, config hash, scheme, n_paths, n_records, state width


def dump_paths(batch: PathBatch, path, config_hash=0):
    """Write the batch as: header, then per path and record (t, radial, state...) float64 rows."""
    st = batch.states
    if np.iscomplexobj(st):
        st = np.stack([st.real, st.imag], axis=-1)
    st = st.reshape(st.shape[0], st.shape[1], -1)
    K, N, W = st.shape
    rows = np.empty((N, K, 2 + W))
    rows[:, :, 0] = batch.times[None, :]
    rows[:, :, 1] = batch.radial.T
    rows[:, :, 2:] = st.transpose(1, 0, 2)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, config_hash, SCHEME_CODES[batch.scheme], N, K, W))
        fh.write(rows.astype("<f8").tobytes())


def load_paths(path):
    """Inverse of dump_paths: returns (header dict, rows array of shape (N, K, 2 + W))."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, h, scheme, n, k, w = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a path dump")
    rows = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, k, 2 + w)
    code = {v: s for s, v in SCHEME_CODES.items()}[scheme]
    return {"version": version, "config_hash": h, "scheme": code, "n_paths": n, "n_records": k, "width": w}, rows
