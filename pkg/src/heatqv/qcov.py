"""Discretized partial quadratic covariations and Itô-formula residuals.

Space (``W_y = u(t, y)`` at fixed ``t``)::

    I1_delta(f, x) = (1/delta) int_{I_x} (f(W_{y+delta}) - f(W_y)) (W_{y+delta} - W_y) dy

Time (``B_s = u(s, x)`` at fixed ``x``)::

    I2_eps(f, t) = eps^{-1/2} int_0^t (f(B_{s+eps}) - f(B_s)) (B_{s+eps} - B_s) ds / (2 sqrt s)

with ``I_x = [0, x]`` or ``[x, 0]``. Integrals in ``y`` use the trapezoid
rule on the path grid. Integrals against ``ds / (2 sqrt s) = d sqrt(s)``
use product-trapezoid weights: the path is interpolated linearly between
grid times and integrated exactly against ``d sqrt(s)``, which is the
substitution ``s = v^2`` carried out in closed form.

All estimators accept a single path (values of shape ``(m,)``) or a batch
of replicates (``(n, m)``) and return a float or an array of length ``n``.
Sums over grid points use numpy's pairwise summation in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from . import kernels as K
from .errors import DomainError
from .functions import TestFunction, get_function
from .sampler import Path

__all__ = [
    "EpsilonSchedule",
    "EstimatorOutput",
    "NormResult",
    "sqrt_time_weights",
    "spatial_pqc",
    "spatial_qv",
    "spatial_reference",
    "forward_integral_space",
    "ito_residual_space",
    "temporal_pqc",
    "temporal_qv",
    "temporal_reference",
    "stratonovich_time",
    "trace_correction_time",
    "divergence_integral_time",
    "forward_integral_time",
    "ito_residual_time",
    "norm_Ht",
    "norm_Hstar",
    "qv_bias_space",
    "qv_bias_time",
    "estimate_schedule",
]

qv_bias_space = K.qv_bias_space
qv_bias_time = K.qv_bias_time
_LOC_TOL = 1e-9


@dataclass(frozen=True)
class EpsilonSchedule:
    """Strictly decreasing positive refinement levels.

    Parameters
    ----------
    levels : sequence of float
    kind : {"spatial", "temporal"}
    """

    levels: tuple
    kind: str = "spatial"

    def __post_init__(self):
        lv = tuple(float(v) for v in self.levels)
        if not lv:
            raise DomainError("schedule needs at least one level")
        if any(v <= 0 for v in lv) or any(b >= a for a, b in zip(lv, lv[1:])):
            raise DomainError("schedule levels must be positive and strictly decreasing")
        if self.kind not in ("spatial", "temporal"):
            raise DomainError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def dyadic(cls, hi: int, lo: int, kind="spatial"):
        """Levels ``2^-hi, ..., 2^-lo`` (``hi < lo``)."""
        return cls(tuple(2.0 ** -k for k in range(hi, lo + 1)), kind)

    def check_resolution(self, step: float):
        """Require the finest level to span at least two grid steps."""
        if self.levels[-1] < 2.0 * step * (1 - 1e-12):
            raise DomainError(
                f"finest level {self.levels[-1]} is below two grid steps ({2 * step})")

    def __len__(self):
        return len(self.levels)


@dataclass
class EstimatorOutput:
    """Per-level estimates with per-path references.

    Attributes
    ----------
    kind : str
        Estimator name (``"spatial_qv"``, ``"temporal_pqc"``, ...).
    f_id : str
    levels : ndarray, shape (L,)
    values : ndarray, shape (n, L)
    reference : ndarray, shape (n,)
        Per-path limit (NaN when there is no per-path reference).
    seeds, replicates : ndarray, shape (n,)
    """

    kind: str
    f_id: str
    levels: np.ndarray
    values: np.ndarray
    reference: np.ndarray
    seeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    replicates: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        n = self.values.shape[0]
        self.reference = np.broadcast_to(np.asarray(self.reference, dtype=float), (n,)).copy()
        if self.values.shape[1] != self.levels.size:
            raise DomainError("values must have one column per level")
        if self.seeds.size == 0:
            self.seeds = np.zeros(n, dtype=np.int64)
        if self.replicates.size == 0:
            self.replicates = np.arange(n, dtype=np.int64)

    @property
    def gaps(self) -> np.ndarray:
        """Absolute gap ``|value - reference|``, shape (n, L)."""
        return np.abs(self.values - self.reference[:, None])

    def rows(self):
        """CSV rows ``(kind, f_id, level, value, reference, gap, seed, replicate)``."""
        g = self.gaps
        for i in range(self.values.shape[0]):
            for j, lv in enumerate(self.levels):
                yield (self.kind, self.f_id, float(lv), float(self.values[i, j]),
                       float(self.reference[i]), float(g[i, j]),
                       int(self.seeds[i]), int(self.replicates[i]))


# ----------------------------------------------------------------------------
# grid helpers

def _as_fn(f):
    if isinstance(f, TestFunction):
        return f
    if callable(f):
        return TestFunction(getattr(f, "__name__", "callable"), f)
    return get_function(f)


def _values(path: Path):
    v = path.values
    return (v[None, :], True) if v.ndim == 1 else (v, False)


def _out(arr, single):
    return float(arr[0]) if single else arr


def _uniform_step(coords):
    h = (coords[-1] - coords[0]) / (coords.size - 1)
    if not np.allclose(np.diff(coords), h, rtol=1e-9, atol=0):
        raise DomainError("estimators need a uniform path grid")
    return h


def _index(coords, value, h):
    i = int(round((value - coords[0]) / h))
    if i < 0 or i >= coords.size or abs(coords[i] - value) > _LOC_TOL * max(h, abs(value)):
        raise DomainError(f"coordinate {value} is not a node of the path grid "
                          f"[{coords[0]}, {coords[-1]}]")
    return i


def _lag(level, h, name):
    k = int(round(level / h))
    if abs(k * h - level) > 1e-9 * level:
        raise DomainError(f"{name}={level} is not a multiple of the grid step {h}")
    if k < 2:
        raise DomainError(f"{name}={level} is below two grid steps ({2 * h})")
    return k


def _space_setup(path: Path, x, delta):
    c = path.coords
    h = _uniform_step(c)
    k = _lag(delta, h, "delta")
    lo = _index(c, min(0.0, x), h)
    hi = _index(c, max(0.0, x), h)
    if hi + k > c.size - 1:
        raise DomainError(f"path does not cover [{min(0.0, x)}, {max(0.0, x) + delta}]")
    return h, k, lo, hi


def _trap_weights(n_nodes, h):
    w = np.full(n_nodes, h)
    if n_nodes == 1:
        return np.zeros(1)
    w[0] = w[-1] = 0.5 * h
    return w


def sqrt_time_weights(times) -> np.ndarray:
    """Product-trapezoid weights for ``int g(s) d sqrt(s)`` over ``times``.

    Exact for ``g`` piecewise linear in ``s`` on the given nodes (which
    must start at 0 for the full weighted integral). Per interval
    ``[a, b]`` of length ``h`` the right node receives
    ``h (1 + sqrt a / (sqrt a + sqrt b)) / (3 (sqrt a + sqrt b))`` and the
    left node ``h / (sqrt a + sqrt b)`` minus that; both forms avoid
    cancellation for large ``s``.
    """
    s = np.asarray(times, dtype=float)
    w = np.zeros(s.size)
    if s.size < 2:
        return w
    ra, rb = np.sqrt(s[:-1]), np.sqrt(s[1:])
    h = np.diff(s)
    tot = h / (ra + rb)
    right = h * (1.0 + ra / (ra + rb)) / (3.0 * (ra + rb))
    left = tot - right
    w[:-1] += left
    w[1:] += right
    return w


def _time_setup(path: Path, t, eps=None):
    c = path.coords
    if c[0] != 0.0:
        raise DomainError("time paths must start at s = 0")
    h = _uniform_step(c)
    n_t = _index(c, t, h)
    k = 0
    if eps is not None:
        k = _lag(eps, h, "eps")
        if n_t + k > c.size - 1:
            raise DomainError(f"path does not cover [0, {t + eps}]")
    return h, k, n_t


def _increment_products(v, f, lo, hi, k):
    a = v[:, lo:hi + 1]
    b = v[:, lo + k:hi + 1 + k]
    return (f(b) - f(a)) * (b - a)


# ----------------------------------------------------------------------------
# space

def spatial_pqc(path: Path, f, x: float, delta: float):
    """Spatial partial quadratic covariation estimator ``I1_delta(f, x)``.

    Parameters
    ----------
    path : Path
        Space path covering ``[min(0, x), max(0, x) + delta]``.
    f : TestFunction, callable or registry spec
    x : float
        Endpoint of ``I_x``; must be a grid node.
    delta : float
        Increment, a multiple of the grid step and at least two steps.
    """
    f = _as_fn(f)
    h, k, lo, hi = _space_setup(path, x, delta)
    v, single = _values(path)
    g = _increment_products(v, f, lo, hi, k)
    res = (g * _trap_weights(hi - lo + 1, h)).sum(axis=-1) / delta
    return _out(res, single)


def spatial_qv(path: Path, x: float, delta: float):
    """Spatial quadratic variation ``(1/delta) int_{I_x} (W_{y+delta} - W_y)^2 dy``.

    Bit-identical to ``spatial_pqc`` with ``f = identity``.
    """
    return spatial_pqc(path, get_function("identity"), x, delta)


def spatial_reference(path: Path, f, x: float):
    """Per-path limit ``int_{I_x} f'(W_y) dy`` (trapezoid on the path grid)."""
    f = _as_fn(f)
    if f.deriv is None:
        raise DomainError(f"{f.id} has no derivative; use the local-time route")
    c = path.coords
    h = _uniform_step(c)
    lo, hi = _index(c, min(0.0, x), h), _index(c, max(0.0, x), h)
    v, single = _values(path)
    res = (f.deriv(v[:, lo:hi + 1]) * _trap_weights(hi - lo + 1, h)).sum(axis=-1)
    return _out(res, single)


def forward_integral_space(path: Path, f, x: float, delta: float):
    """Forward integral ``(1/delta) int_{I_x} f(W_y) (W_{y+delta} - W_y) dy``.

    Stands in for the Skorohod integral over ``I_x``.
    """
    f = _as_fn(f)
    h, k, lo, hi = _space_setup(path, x, delta)
    v, single = _values(path)
    a = v[:, lo:hi + 1]
    g = f(a) * (v[:, lo + k:hi + 1 + k] - a)
    res = (g * _trap_weights(hi - lo + 1, h)).sum(axis=-1) / delta
    return _out(res, single)


def ito_residual_space(F, path: Path, x: float, delta: float):
    """Residual of the spatial Itô formula for ``F`` with ``F' = f``.

    ``F(W_x) - F(W_0) - s (forward(f) + pqc(f) / 2)`` with ``s = sign(x)``:
    for ``x < 0`` the integrals over ``I_x = [x, 0]`` are oriented from
    ``0`` to ``x``.
    """
    F = _as_fn(F)
    f = F.derivative()
    c = path.coords
    h = _uniform_step(c)
    v, single = _values(path)
    i0, ix = _index(c, 0.0, h), _index(c, x, h)
    orient = 1.0 if x >= 0 else -1.0
    lhs = F(v[:, ix]) - F(v[:, i0])
    fwd = forward_integral_space(Path(c, v, "space"), f, x, delta)
    pqc = spatial_pqc(Path(c, v, "space"), f, x, delta)
    return _out(lhs - orient * (fwd + 0.5 * pqc), single)


# ----------------------------------------------------------------------------
# time

def temporal_pqc(path: Path, f, t: float, eps: float):
    """Temporal partial quadratic covariation estimator ``I2_eps(f, t)``.

    Parameters
    ----------
    path : Path
        Time path on a uniform grid starting at 0 and covering ``[0, t + eps]``.
    f : TestFunction, callable or registry spec
    t : float
        Grid node.
    eps : float
        Multiple of the time step, at least two steps.
    """
    f = _as_fn(f)
    h, k, n_t = _time_setup(path, t, eps)
    v, single = _values(path)
    g = _increment_products(v, f, 0, n_t, k)
    res = (g * sqrt_time_weights(path.coords[:n_t + 1])).sum(axis=-1) / math.sqrt(eps)
    return _out(res, single)


def temporal_qv(path: Path, t: float, eps: float):
    """Temporal quadratic variation ``eps^{-1/2} int_0^t (B_{s+eps} - B_s)^2 d sqrt(s)``."""
    return temporal_pqc(path, get_function("identity"), t, eps)


def temporal_reference(path: Path, f, t: float):
    """Per-path limit ``int_0^t f'(B_s) ds / sqrt(2 pi s)``."""
    f = _as_fn(f)
    if f.deriv is None:
        raise DomainError(f"{f.id} has no derivative; use the local-time route")
    h, _, n_t = _time_setup(path, t)
    v, single = _values(path)
    w = sqrt_time_weights(path.coords[:n_t + 1])
    res = math.sqrt(2.0 / math.pi) * (f.deriv(v[:, :n_t + 1]) * w).sum(axis=-1)
    return _out(res, single)


def stratonovich_time(path: Path, f, t: float, eps: float):
    """Symmetric Riemann sum ``sum_j (f(B_{s_j}) + f(B_{s_{j+1}})) / 2 (B_{s_{j+1}} - B_{s_j})``.

    The partition is ``s_j = j eps`` on ``[0, t]``; ``t`` must be a
    multiple of ``eps``.
    """
    f = _as_fn(f)
    h, k, n_t = _time_setup(path, t, eps)
    if n_t % k:
        raise DomainError(f"t={t} is not a multiple of eps={eps}")
    v, single = _values(path)
    b = v[:, 0:n_t + 1:k]
    fb = f(b)
    res = (0.5 * (fb[:, 1:] + fb[:, :-1]) * np.diff(b, axis=-1)).sum(axis=-1)
    return _out(res, single)


def trace_correction_time(path: Path, f, t: float, eps: float):
    """Trace term turning the symmetric integral into the divergence integral.

    For ``f`` with a registered derivative this is
    ``(1/2) int_0^t f'(B_s) d Var(B_s) = (2 sqrt pi)^{-1} int_0^t f'(B_s) d sqrt(s)``.
    Without a derivative the limit ``(2 sqrt 2)^{-1} I2_eps(f, t)`` is used.
    """
    f = _as_fn(f)
    if f.deriv is None:
        return temporal_pqc(path, f, t, eps) / (2.0 * math.sqrt(2.0))
    h, _, n_t = _time_setup(path, t)
    v, single = _values(path)
    w = sqrt_time_weights(path.coords[:n_t + 1])
    res = (f.deriv(v[:, :n_t + 1]) * w).sum(axis=-1) / (2.0 * math.sqrt(math.pi))
    return _out(res, single)


def divergence_integral_time(path: Path, f, t: float, eps: float):
    """Numerical divergence (Skorohod) integral ``int_0^t f(B_s) delta B_s``.

    Symmetric Riemann sum with mesh ``eps`` minus the trace correction.
    """
    s = stratonovich_time(path, f, t, eps)
    return s - trace_correction_time(path, f, t, eps)


def forward_integral_time(path: Path, f, t: float, eps: float):
    """Literal regularized forward integral ``(1/eps) int_0^t f(B_s)(B_{s+eps} - B_s) ds``.

    Provided for diagnostics: since ``E (B_{s+eps} - B_s)^2 ~ sqrt(eps)``,
    this quantity diverges like ``eps^{-1/2}`` for non-constant ``f``.
    """
    f = _as_fn(f)
    h, k, n_t = _time_setup(path, t, eps)
    v, single = _values(path)
    a = v[:, :n_t + 1]
    g = f(a) * (v[:, k:n_t + 1 + k] - a)
    res = (g * _trap_weights(n_t + 1, h)).sum(axis=-1) / eps
    return _out(res, single)


def ito_residual_time(F, path: Path, t: float, eps: float, route: str = "pqc"):
    """Residual of the temporal Itô formula for ``F`` with ``F' = f``.

    ``route="pqc"``:   ``F(B_t) - F(B_0) - div(f) - (2 sqrt 2)^{-1} I2_eps(f, t)``.
    ``route="trace"``: ``F(B_t) - F(B_0) - div(f) - (2 sqrt 2)^{-1} int_0^t f'(B_s) ds / sqrt(2 pi s)``,
    available when ``f`` has a derivative (``F`` of class C2).
    """
    F = _as_fn(F)
    f = F.derivative()
    h, k, n_t = _time_setup(path, t, eps)
    v, single = _values(path)
    p = Path(path.coords, v, "time")
    lhs = F(v[:, n_t]) - F(v[:, 0])
    div = divergence_integral_time(p, f, t, eps)
    if route == "pqc":
        corr = temporal_pqc(p, f, t, eps)
    elif route == "trace":
        corr = temporal_reference(p, f, t)
    else:
        raise DomainError(f"unknown route {route!r}")
    return _out(lhs - div - corr / (2.0 * math.sqrt(2.0)), single)


# ----------------------------------------------------------------------------
# norms

@dataclass(frozen=True)
class NormResult:
    """A weighted L2 norm; ``infinite`` flags growth above the threshold."""

    norm: float
    norm2: float
    error: float = 0.0
    infinite: bool = False


def _z_cutoff(a_eff):
    # exp(-a_eff z^2) < 1e-16 beyond the cutoff (with polynomial headroom)
    return math.sqrt(40.0 / a_eff)


def norm_Ht(f, t: float, x: float, quad: K.QuadratureConfig = K.DEFAULT_QUAD) -> NormResult:
    """``||f||_{H_t}`` with ``||f||^2 = |x| (4 pi t)^{-1/4} int |f|^2 (sqrt t + z^2) e^{-sqrt(pi) z^2 / (2 sqrt t)} dz``.

    Functions declaring ``beta >= sqrt(pi) / (4 sqrt t)`` are flagged
    infinite without integrating.
    """
    f = _as_fn(f)
    if not t > 0:
        raise DomainError("t must be > 0")
    a = math.sqrt(math.pi) / (2.0 * math.sqrt(t))
    if f.beta >= a / 2.0:
        return NormResult(math.inf, math.inf, 0.0, True)
    zc = _z_cutoff(a - 2.0 * f.beta)

    def g(z):
        fz = float(f(np.array([z]))[0])
        return fz * fz * (math.sqrt(t) + z * z) * math.exp(-a * z * z)

    pts = [p for p in f.kinks if -zc < p < zc] or None
    val, err = integrate.quad(g, -zc, zc, points=pts, epsabs=quad.abs_tol,
                              epsrel=quad.rel_tol, limit=quad.max_subdivisions)
    pref = abs(x) / (4.0 * math.pi * t) ** 0.25
    n2 = pref * val
    if not math.isfinite(n2):
        return NormResult(math.inf, math.inf, err, True)
    return NormResult(math.sqrt(n2), n2, pref * err)


def norm_Hstar(f, T: float, quad: K.QuadratureConfig = K.DEFAULT_QUAD) -> NormResult:
    """``||f||_{H_*}`` with ``||f||^2 = (4 pi)^{-1/4} int_0^T int |f|^2 e^{-z^2 sqrt(pi) / (2 sqrt s)} dz ds / s^{3/4}``.

    The ``s^{-3/4}`` singularity is removed by ``s = v^4``. Growth
    ``beta >= sqrt(pi) / (4 sqrt T)`` is flagged infinite.
    """
    f = _as_fn(f)
    if not T > 0:
        raise DomainError("T must be > 0")
    thr = math.sqrt(math.pi) / (4.0 * math.sqrt(T))
    if f.beta >= thr:
        return NormResult(math.inf, math.inf, 0.0, True)

    def inner(s):
        a = math.sqrt(math.pi) / (2.0 * math.sqrt(s))
        zc = _z_cutoff(a - 2.0 * f.beta)
        pts = [p for p in f.kinks if -zc < p < zc] or None

        def g(z):
            fz = float(f(np.array([z]))[0])
            return fz * fz * math.exp(-a * z * z)

        return integrate.quad(g, -zc, zc, points=pts, epsabs=quad.abs_tol,
                              epsrel=quad.rel_tol, limit=quad.max_subdivisions)[0]

    val, err = integrate.quad(lambda v: 4.0 * inner(v ** 4) if v > 0 else 0.0,
                              0.0, T ** 0.25, epsabs=quad.abs_tol,
                              epsrel=max(quad.rel_tol, 1e-9), limit=quad.max_subdivisions)
    pref = 1.0 / (4.0 * math.pi) ** 0.25
    n2 = pref * val
    return NormResult(math.sqrt(n2), n2, pref * err)


# ----------------------------------------------------------------------------
# schedules

def estimate_schedule(kind: str, path: Path, f, at: float, schedule: EpsilonSchedule,
                      reference: bool = True) -> EstimatorOutput:
    """Evaluate one estimator over every level of ``schedule``.

    Parameters
    ----------
    kind : {"spatial_pqc", "spatial_qv", "temporal_pqc", "temporal_qv"}
    path : Path
        Single path or batch.
    f : TestFunction or spec (ignored for the ``*_qv`` kinds)
    at : float
        ``x`` for spatial kinds, ``t`` for temporal kinds.
    reference : bool
        Attach the per-path limit (``|x|`` / ``sqrt(2t/pi)`` for the
        quadratic variations, ``int f'`` for the covariations).
    """
    schedule.check_resolution(_uniform_step(path.coords))
    v, _ = _values(path)
    p = Path(path.coords, v, path.kind)
    if kind in ("spatial_qv", "temporal_qv"):
        f = get_function("identity")
    f = _as_fn(f)
    est = {"spatial_pqc": spatial_pqc, "spatial_qv": spatial_pqc,
           "temporal_pqc": temporal_pqc, "temporal_qv": temporal_pqc}.get(kind)
    if est is None:
        raise DomainError(f"unknown estimator {kind!r}")
    vals = np.column_stack([np.atleast_1d(est(p, f, at, lv)) for lv in schedule.levels])
    ref = np.full(v.shape[0], np.nan)
    if reference:
        if kind == "spatial_qv":
            ref[:] = abs(at)
        elif kind == "temporal_qv":
            ref[:] = math.sqrt(2.0 * at / math.pi)
        elif f.deriv is not None:
            r = spatial_reference if kind == "spatial_pqc" else temporal_reference
            ref = np.atleast_1d(r(p, f, at))
    return EstimatorOutput(kind, f.id, np.array(schedule.levels), vals, ref)
