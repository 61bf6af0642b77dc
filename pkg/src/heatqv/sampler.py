"""Exact Gaussian sampling of ``u`` on a rectangular time x space grid.

The covariance matrix of the grid values is built from the closed-form
kernel, factorized by a dense Cholesky decomposition with geometric
jitter escalation, and applied to independent standard normal vectors.
Replicate ``k`` of a run with master seed ``seed`` draws its normals from
the stream ``SeedSequence(seed, spawn_key=(k,))``, so it does not depend
on how many replicates are requested or on how work is split.
"""

from __future__ import annotations

import hashlib
import io
import math
import struct
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas, lapack
from threadpoolctl import threadpool_limits

from . import kernels as K
from .errors import CapacityError, DomainError, FactorizationError

__all__ = [
    "FieldGrid",
    "FieldSample",
    "SamplerConfig",
    "Factor",
    "Path",
    "build_covariance",
    "factor_psd",
    "grid_factor",
    "sample_field",
    "replicate_rng",
    "slice_space",
    "slice_time",
    "stack_paths",
    "write_sample",
    "read_sample",
    "sample_to_csv",
    "uniform_grid",
]

DEFAULT_MAX_POINTS = 8192


@dataclass(frozen=True, eq=False)
class FieldGrid:
    """Rectangular lattice ``times x spaces``.

    Parameters
    ----------
    times : array_like
        Strictly increasing, non-negative time points.
    spaces : array_like
        Strictly increasing space points.
    dt, dx : float, optional
        Nominal steps. Inferred from the coordinates when they are uniform,
        NaN otherwise.
    max_points : int
        Cap on ``len(times) * len(spaces)`` for dense exact sampling.
    """

    times: np.ndarray
    spaces: np.ndarray
    dt: float = float("nan")
    dx: float = float("nan")
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        times = np.array(self.times, dtype=float, copy=True).reshape(-1)
        spaces = np.array(self.spaces, dtype=float, copy=True).reshape(-1)
        if times.size == 0 or spaces.size == 0:
            raise DomainError("grid needs at least one time and one space point")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(spaces))):
            raise DomainError("grid coordinates must be finite")
        if times[0] < 0:
            raise DomainError("times must be >= 0")
        if np.any(np.diff(times) <= 0) or np.any(np.diff(spaces) <= 0):
            raise DomainError("grid coordinates must be strictly increasing")
        times.flags.writeable = False
        spaces.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "spaces", spaces)
        if math.isnan(self.dt):
            object.__setattr__(self, "dt", _nominal_step(times))
        if math.isnan(self.dx):
            object.__setattr__(self, "dx", _nominal_step(spaces))

    @property
    def shape(self):
        return (self.times.size, self.spaces.size)

    @property
    def n_points(self):
        return self.times.size * self.spaces.size

    def key(self) -> str:
        """Content hash identifying the lattice."""
        h = hashlib.sha256()
        h.update(self.times.tobytes())
        h.update(b"|")
        h.update(self.spaces.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, FieldGrid):
            return NotImplemented
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.spaces, other.spaces))

    def __hash__(self):
        return hash(self.key())


def _nominal_step(c):
    if c.size < 2:
        return float("nan")
    d = np.diff(c)
    h = (c[-1] - c[0]) / (c.size - 1)
    return float(h) if np.allclose(d, h, rtol=1e-9, atol=0) else float("nan")


def uniform_grid(t_max=None, dt=None, x_min=0.0, x_max=None, dx=None, *,
                 times=None, spaces=None, max_points=DEFAULT_MAX_POINTS):
    """Build a grid from step sizes.

    Times run over ``0, dt, ..., t_max`` (or ``times`` if given); spaces
    over ``x_min, x_min + dx, ..., x_max`` (or ``spaces``). Coordinates are
    computed as ``k * step`` to keep them exact multiples of the step.
    """
    if times is None:
        nt = int(round(t_max / dt))
        if not math.isclose(nt * dt, t_max, rel_tol=1e-9, abs_tol=1e-15):
            raise DomainError(f"t_max={t_max} is not a multiple of dt={dt}")
        times = np.arange(nt + 1) * dt
    if spaces is None:
        nx = int(round((x_max - x_min) / dx))
        if not math.isclose(x_min + nx * dx, x_max, rel_tol=1e-9, abs_tol=1e-15):
            raise DomainError(f"[x_min, x_max] is not a multiple of dx={dx}")
        spaces = x_min + np.arange(nx + 1) * dx
    return FieldGrid(np.asarray(times, float), np.asarray(spaces, float),
                     dt=dt if dt is not None else float("nan"),
                     dx=dx if dx is not None else float("nan"),
                     max_points=max_points)


@dataclass(frozen=True)
class SamplerConfig:
    """Jitter policy for the Cholesky factorization.

    Attempt ``k >= 1`` adds ``jitter_start * jitter_growth**(k-1)`` times
    the mean diagonal to the diagonal; attempt 0 uses no jitter.
    """

    jitter_start: float = 1e-12
    jitter_growth: float = 10.0
    max_retries: int = 10

    def __post_init__(self):
        if not self.jitter_start > 0:
            raise DomainError("jitter_start must be > 0")
        if not self.jitter_growth > 1:
            raise DomainError("jitter_growth must be > 1")
        if self.max_retries < 0:
            raise DomainError("max_retries must be >= 0")


DEFAULT_SAMPLER = SamplerConfig()


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One realization ``values[i, j] = u(times[i], spaces[j])``."""

    values: np.ndarray
    seed: int
    grid: FieldGrid
    replicate: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class Path:
    """A one-parameter path extracted from field samples.

    ``values`` has shape ``(m,)`` for one path or ``(n, m)`` for a batch
    of ``n`` replicates sharing the coordinates ``coords`` (length ``m``).
    ``kind`` is ``"space"`` (``W_x = u(t, x)`` at fixed ``t``) or
    ``"time"`` (``B_t = u(t, x)`` at fixed ``x``); ``fixed`` is the
    coordinate held fixed.
    """

    coords: np.ndarray
    values: np.ndarray
    kind: str = "space"
    fixed: float = float("nan")
    seeds: tuple = ()

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if c.ndim != 1 or v.shape[-1] != c.size:
            raise DomainError("path values must end with an axis matching coords")
        if self.kind not in ("space", "time"):
            raise DomainError(f"unknown path kind {self.kind!r}")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "values", v)

    @property
    def step(self) -> float:
        return _nominal_step(self.coords)

    @property
    def n_replicates(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[0]


@dataclass
class Factor:
    """Cholesky factor of a covariance matrix with zero rows removed.

    Attributes
    ----------
    chol : ndarray
        Lower-triangular factor of the active submatrix (Fortran order).
    active : ndarray
        Indices of rows with positive diagonal; all other rows of the full
        matrix are identically zero.
    jitter : float
        Absolute diagonal boost that was needed (0 if none).
    size : int
        Dimension of the full matrix.
    """

    chol: np.ndarray
    active: np.ndarray
    jitter: float
    size: int

    @property
    def L(self) -> np.ndarray:
        """Full-size lower-triangular factor (zero rows for inactive points)."""
        if self.active.size == self.size:
            return np.ascontiguousarray(self.chol)
        out = np.zeros((self.size, self.size))
        out[np.ix_(self.active, self.active)] = self.chol
        return out

    def __iter__(self):
        # allows ``L, jitter = factor_psd(m)``
        yield self.L
        yield self.jitter

    def apply(self, z: np.ndarray) -> np.ndarray:
        """Return ``L @ z`` for ``z`` of shape ``(len(active), k)`` as full rows."""
        z = np.asfortranarray(z, dtype=float)
        y = blas.dtrmm(1.0, self.chol, z, lower=1)
        out = np.zeros((self.size, z.shape[1]))
        out[self.active] = y
        return out


# ----------------------------------------------------------------------------
# covariance

def _points(grid: FieldGrid):
    tt = np.repeat(grid.times, grid.spaces.size)
    xx = np.tile(grid.spaces, grid.times.size)
    return tt, xx


def _check_capacity(grid: FieldGrid):
    if grid.n_points > grid.max_points:
        raise CapacityError(
            f"grid has {grid.n_points} points, above the cap of {grid.max_points}; "
            "sample a single-time or single-site slice or raise max_points")


def _fill_block(out, tt, xx, rows, cols_stop):
    """Fill ``out[rows, :cols_stop]`` with closed-form covariances."""
    t_r, x_r = tt[rows][:, None], xx[rows][:, None]
    t_c, x_c = tt[None, :cols_stop], xx[None, :cols_stop]
    if np.all(xx == xx[0]):
        out[rows, :cols_stop] = K.cov_time(t_r, t_c)
    else:
        out[rows, :cols_stop] = K.cov_spacetime_closed(t_r, x_r, t_c, x_c)


def _build_closed(tt, xx, out=None, block=512):
    n = tt.size
    if out is None:
        out = np.empty((n, n), order="F")
    for r0 in range(0, n, block):
        r1 = min(n, r0 + block)
        rows = slice(r0, r1)
        # lower block-row only; mirrored below
        _fill_block(out, tt, xx, rows, r1)
    # exact symmetry: copy the lower triangle onto the upper one
    for c0 in range(0, n, block):
        c1 = min(n, c0 + block)
        out[c0:c1, c1:] = out[c1:, c0:c1].T
        sq = out[c0:c1, c0:c1]
        iu = np.triu_indices(c1 - c0, 1)
        sq[iu] = sq.T[iu]
    zero = tt == 0
    if np.any(zero):
        out[zero, :] = 0.0
        out[:, zero] = 0.0
    return out


def build_covariance(grid: FieldGrid, quad: K.QuadratureConfig | None = None,
                     method: str = "closed") -> np.ndarray:
    """Covariance matrix of the grid values, points in row-major order.

    Entry ``(i * nx + j, i' * nx + j')`` is the covariance of
    ``u(times[i], spaces[j])`` and ``u(times[i'], spaces[j'])``.

    Parameters
    ----------
    grid : FieldGrid
    quad : QuadratureConfig, optional
        Tolerances for ``method="quad"``.
    method : {"closed", "quad"}
        ``"closed"`` uses the erfc antiderivative (fast, vectorised);
        ``"quad"`` calls :func:`heatqv.kernels.cov_spacetime` per entry.

    Raises
    ------
    CapacityError
        If the grid exceeds ``grid.max_points``.
    """
    _check_capacity(grid)
    tt, xx = _points(grid)
    if method == "closed":
        return np.ascontiguousarray(_build_closed(tt, xx))
    if method != "quad":
        raise DomainError(f"unknown method {method!r}")
    quad = quad or K.DEFAULT_QUAD
    n = tt.size
    out = np.zeros((n, n))
    for a in range(n):
        if tt[a] == 0:
            continue
        for b in range(a + 1):
            if tt[b] == 0:
                continue
            v = K.cov_spacetime(K.CovQuery(tt[a], tt[b], xx[a], xx[b]), quad)
            out[a, b] = out[b, a] = v
    return out


# ----------------------------------------------------------------------------
# factorization

def _zero_upper(c, block=1024):
    n = c.shape[0]
    for c0 in range(0, n, block):
        c1 = min(n, c0 + block)
        c[:c0, c0:c1] = 0.0
        sq = c[c0:c1, c0:c1]
        sq[np.triu_indices(c1 - c0, 1)] = 0.0


def _factor_active(fill, n_active, mean_diag, cfg: SamplerConfig):
    """Run jittered Cholesky on a matrix produced by ``fill(buf)``."""
    buf = np.empty((n_active, n_active), order="F")
    jitter = 0.0
    for attempt in range(cfg.max_retries + 1):
        if attempt > 0:
            jitter = cfg.jitter_start * cfg.jitter_growth ** (attempt - 1) * mean_diag
        fill(buf)
        if jitter:
            buf[np.diag_indices(n_active)] += jitter
        with threadpool_limits(limits=1, user_api="blas"):
            c, info = lapack.dpotrf(buf, lower=1, clean=0, overwrite_a=1)
        if info == 0:
            _zero_upper(c)
            return c, jitter
        if info < 0:
            raise FactorizationError(f"dpotrf argument error {info}", jitter)
        buf = c  # reuse the storage on the next attempt
    raise FactorizationError(
        f"Cholesky failed after {cfg.max_retries} jitter retries", jitter)


def factor_psd(m: np.ndarray, cfg: SamplerConfig = DEFAULT_SAMPLER) -> Factor:
    """Lower-triangular factor ``L`` with ``L L^T = m + jitter I``.

    Rows whose diagonal is exactly zero (``t = 0`` points) are skipped and
    come back as zero rows of ``L``. The remaining block is factorized
    without jitter first; on failure the diagonal boost grows
    geometrically from ``cfg.jitter_start`` times the mean diagonal.

    Returns
    -------
    Factor
        Unpacks as ``L, jitter``.

    Raises
    ------
    FactorizationError
        If all retries fail; carries the last jitter tried.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DomainError("matrix must be square")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix must be finite")
    if not np.array_equal(m, m.T):
        raise DomainError("matrix must be exactly symmetric")
    diag = np.diag(m)
    if np.any(diag < 0):
        raise FactorizationError("negative diagonal entry", 0.0)
    active = np.flatnonzero(diag > 0)
    n = m.shape[0]
    if active.size == 0:
        return Factor(np.zeros((0, 0), order="F"), active, 0.0, n)
    sub = m[np.ix_(active, active)]
    mean_diag = float(np.mean(diag[active]))

    def fill(buf):
        buf[...] = sub

    c, jitter = _factor_active(fill, active.size, mean_diag, cfg)
    return Factor(c, active, jitter, n)


_CACHE_LOCK = threading.Lock()
_CACHE: "OrderedDict[tuple, Factor]" = OrderedDict()
_CACHE_BYTES = 3 * 2**30


def grid_factor(grid: FieldGrid, cfg: SamplerConfig = DEFAULT_SAMPLER) -> Factor:
    """Factor of the grid covariance, memoised per process.

    The matrix is assembled directly in Fortran order inside the buffer
    handed to LAPACK, so peak memory is one ``n x n`` array. Factors are
    kept in a small least-recently-used cache bounded by total size.
    """
    _check_capacity(grid)
    key = (grid.key(), cfg)
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    tt, xx = _points(grid)
    active = np.flatnonzero(tt > 0)
    n = tt.size
    if active.size == 0:
        fac = Factor(np.zeros((0, 0), order="F"), active, 0.0, n)
    else:
        ta, xa = tt[active], xx[active]
        mean_diag = float(np.mean(np.sqrt(ta / np.pi)))
        c, jitter = _factor_active(lambda buf: _build_closed(ta, xa, out=buf),
                                   active.size, mean_diag, cfg)
        fac = Factor(c, active, jitter, n)
    nbytes = fac.chol.nbytes
    with _CACHE_LOCK:
        _CACHE[key] = fac
        total = sum(f.chol.nbytes for f in _CACHE.values())
        while len(_CACHE) > 1 and total > _CACHE_BYTES - nbytes:
            _, old = _CACHE.popitem(last=False)
            total -= old.chol.nbytes
    return fac


def clear_factor_cache():
    """Drop all memoised factors."""
    with _CACHE_LOCK:
        _CACHE.clear()


# ----------------------------------------------------------------------------
# sampling

def replicate_rng(seed: int, k: int) -> np.random.Generator:
    """Independent generator for replicate ``k`` under master ``seed``."""
    if seed < 0 or k < 0:
        raise DomainError("seed and replicate index must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


_BLOCK = 16  # replicates per triangular multiply; fixed for reproducibility


def _sample_values(fac: Factor, shape, seed, ks, threads=1):
    n_act = fac.active.size
    blocks = [ks[i:i + _BLOCK] for i in range(0, len(ks), _BLOCK)]

    def run(block):
        z = np.empty((n_act, len(block)), order="F")
        for col, k in enumerate(block):
            z[:, col] = replicate_rng(seed, k).standard_normal(n_act)
        with threadpool_limits(limits=1, user_api="blas"):
            full = fac.apply(z) if n_act else np.zeros((fac.size, len(block)))
        return [full[:, c].reshape(shape) for c in range(len(block))]

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    return [v for part in parts for v in part]


def sample_field(grid: FieldGrid, n: int, seed: int,
                 cfg: SamplerConfig = DEFAULT_SAMPLER, *, first: int = 0,
                 threads: int = 1) -> list[FieldSample]:
    """Draw ``n`` independent exact samples of ``u`` on ``grid``.

    Parameters
    ----------
    grid : FieldGrid
    n : int
        Number of replicates; ``0`` returns an empty list.
    seed : int
        Master seed (non-negative, below ``2**64``).
    cfg : SamplerConfig
    first : int
        Index of the first replicate, so that ``sample_field(g, n, s,
        first=a)`` returns replicates ``a, ..., a + n - 1``.
    threads : int
        Worker threads over replicate blocks. Output bytes do not depend
        on this value.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    if not 0 <= seed < 2**64:
        raise DomainError("seed must be a 64-bit unsigned integer")
    if n == 0:
        return []
    fac = grid_factor(grid, cfg)
    ks = list(range(first, first + n))
    vals = _sample_values(fac, grid.shape, seed, ks, threads)
    return [FieldSample(v, seed, grid, k) for v, k in zip(vals, ks)]


def slice_space(sample: FieldSample, t_index: int) -> Path:
    """Path ``x -> u(times[t_index], x)`` (a view of the sample)."""
    nt = sample.grid.times.size
    if not -nt <= t_index < nt:
        raise IndexError(f"t_index {t_index} out of range for {nt} times")
    return Path(sample.grid.spaces, sample.values[t_index, :], "space",
                float(sample.grid.times[t_index]), (sample.seed,))


def slice_time(sample: FieldSample, x_index: int) -> Path:
    """Path ``t -> u(t, spaces[x_index])`` (a view of the sample)."""
    nx = sample.grid.spaces.size
    if not -nx <= x_index < nx:
        raise IndexError(f"x_index {x_index} out of range for {nx} sites")
    return Path(sample.grid.times, sample.values[:, x_index], "time",
                float(sample.grid.spaces[x_index]), (sample.seed,))


def stack_paths(paths) -> Path:
    """Stack single paths with common coordinates into one batch."""
    paths = list(paths)
    if not paths:
        raise DomainError("no paths to stack")
    p0 = paths[0]
    for p in paths[1:]:
        if p.kind != p0.kind or not np.array_equal(p.coords, p0.coords):
            raise DomainError("paths must share kind and coordinates")
    vals = np.stack([np.atleast_2d(p.values) for p in paths]).reshape(-1, p0.coords.size)
    seeds = tuple(s for p in paths for s in p.seeds)
    return Path(p0.coords, vals, p0.kind, p0.fixed, seeds)


# ----------------------------------------------------------------------------
# serialization

_MAGIC = b"HQVF"
_HEADER = struct.Struct("<4sIQQQQ")  # magic, version, n_times, n_spaces, seed, replicate


def write_sample(fp, sample: FieldSample):
    """Write a sample in the little-endian binary layout.

    Layout: header ``(magic, version, n_times, n_spaces, seed, replicate)``,
    then ``times``, ``spaces`` and the row-major ``values``, all float64.
    """
    nt, nx = sample.grid.shape
    fp.write(_HEADER.pack(_MAGIC, 1, nt, nx, sample.seed, sample.replicate))
    for arr in (sample.grid.times, sample.grid.spaces, sample.values):
        fp.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_sample(fp, max_points: int = 2**31) -> FieldSample:
    """Inverse of :func:`write_sample`."""
    head = fp.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise DomainError("truncated header")
    magic, version, nt, nx, seed, rep = _HEADER.unpack(head)
    if magic != _MAGIC or version != 1:
        raise DomainError("not a field sample file")

    def take(k):
        buf = fp.read(8 * k)
        if len(buf) != 8 * k:
            raise DomainError("truncated body")
        return np.frombuffer(buf, dtype="<f8").astype(float)

    times, spaces = take(nt), take(nx)
    values = take(nt * nx).reshape(nt, nx)
    grid = FieldGrid(times, spaces, max_points=max(max_points, nt * nx))
    return FieldSample(values, seed, grid, rep)


def sample_to_csv(sample: FieldSample, fp=None) -> str | None:
    """Export ``(t, x, value)`` rows; returns the text if ``fp`` is None."""
    own = fp is None
    fp = io.StringIO() if own else fp
    fp.write("t,x,value\n")
    tt, xx = _points(sample.grid)
    for t, x, v in zip(tt, xx, sample.values.reshape(-1)):
        fp.write(f"{t!r},{x!r},{v!r}\n")
    return fp.getvalue() if own else None
