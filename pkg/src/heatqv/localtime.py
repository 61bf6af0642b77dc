"""Occupation measures and kernel local times of space and time paths.

For a space path ``W`` the local time ``L(a, x)`` is the density at level
``a`` of the occupation measure ``A -> int_{I_x} 1_A(W_y) dy``. For a time
path ``B`` the weighted local time is

    Lw(a, t) = int_0^t delta(B_s - a) ds / (2 sqrt(pi s)),

whose total mass over ``a`` is ``sqrt(t / pi)``. Arguments are always
ordered level first, endpoint second.

Densities are estimated by smoothing with a kernel ``K_h`` of bandwidth
``h = 1/n``: the default profile is the smooth bump

    zeta(x) = c exp(1 / ((x - 1)^2 - 1))  on (0, 2),  zeta_n(x) = n zeta(n x),

centred as ``K_h(u) = zeta_n(u + h)`` so that it is symmetric with support
``(-h, h)``. A Gaussian profile with the same variance is available as a
cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .functions import TestFunction, get_function, step_down, step_up
from .qcov import (_index, _time_setup, _trap_weights, _uniform_step, _values,
                   divergence_integral_time, forward_integral_space, spatial_pqc,
                   sqrt_time_weights)
from .sampler import Path

__all__ = [
    "BUMP_NORMALIZER",
    "Mollifier",
    "LocalTimeEstimate",
    "OccupationMeasure",
    "occupation_histogram",
    "local_time_space",
    "weighted_local_time_time",
    "local_time_profile",
    "stieltjes_sum",
    "bouleau_yor_residual",
    "tanaka_residual_space",
    "tanaka_residual_time",
    "bandwidth_for",
]

# 1 / int_0^2 exp(1 / ((x - 1)^2 - 1)) dx
BUMP_NORMALIZER = 2.2522836210435810
# standard deviation of the centred bump on (-1, 1)
_BUMP_SD = 0.39763505411847
N_LEVELS = 256


@dataclass(frozen=True)
class Mollifier:
    """Smoothing kernel of sharpness ``n`` (bandwidth ``h = 1/n``).

    Parameters
    ----------
    n : float
        Sharpness index; need not be an integer.
    profile : {"bump", "gaussian"}
    """

    n: float
    profile: str = "bump"

    def __post_init__(self):
        if not self.n > 0:
            raise DomainError("mollifier sharpness n must be > 0")
        if self.profile not in ("bump", "gaussian"):
            raise DomainError(f"unknown profile {self.profile!r}")

    @classmethod
    def from_bandwidth(cls, h: float, profile="bump"):
        return cls(1.0 / h, profile)

    @property
    def bandwidth(self) -> float:
        return 1.0 / self.n

    @property
    def support(self) -> float:
        """Half-width beyond which the centred kernel is (numerically) zero."""
        return self.bandwidth if self.profile == "bump" else 8.0 * _BUMP_SD * self.bandwidth

    def zeta_n(self, x):
        """Uncentred bump ``n zeta(n x)`` with support ``(0, 2/n)``."""
        return self.kernel(np.asarray(x, dtype=float) - self.bandwidth) \
            if self.profile == "bump" else self.kernel(np.asarray(x, dtype=float))

    def kernel(self, u):
        """Centred kernel ``K_h(u)``: nonnegative, symmetric, unit mass."""
        u = np.asarray(u, dtype=float)
        z = u * self.n
        if self.profile == "gaussian":
            s = _BUMP_SD
            return self.n * np.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        out = np.zeros(z.shape)
        m = np.abs(z) < 1.0
        zm = z[m]
        out[m] = self.n * BUMP_NORMALIZER * np.exp(1.0 / (zm * zm - 1.0))
        return out


def bandwidth_for(level: float, exponent: float = 0.5) -> float:
    """Coupled bandwidth ``h = level ** exponent``."""
    if not level > 0:
        raise DomainError("level must be > 0")
    return float(level) ** exponent


@dataclass
class LocalTimeEstimate:
    """Kernel local time on a grid of levels.

    Attributes
    ----------
    levels : ndarray
        Increasing ``a`` values.
    mass : ndarray
        Density ``L(a, .)`` at each level.
    bandwidth : float
    weight_kind : {"plain", "sqrt-time-weighted"}
    seed : int
    """

    levels: np.ndarray
    mass: np.ndarray
    bandwidth: float
    weight_kind: str = "plain"
    seed: int = 0

    def total(self) -> float:
        """``int L(a) da`` by the trapezoid rule on the level grid."""
        return float(np.sum(_trap_nonuniform(self.levels) * self.mass))

    def integrate(self, psi) -> float:
        """``int psi(a) L(a) da`` (trapezoid)."""
        return float(np.sum(_trap_nonuniform(self.levels) * psi(self.levels) * self.mass))

    def rows(self):
        for a, m in zip(self.levels, self.mass):
            yield (float(a), float(m), float(self.bandwidth), self.weight_kind, int(self.seed))


@dataclass
class OccupationMeasure:
    """Occupation measure per bin; ``mass[j]`` is the time spent in ``[edges[j], edges[j+1])``."""

    edges: np.ndarray
    mass: np.ndarray

    @property
    def density(self):
        return self.mass / np.diff(self.edges)

    def total(self) -> float:
        return float(self.mass.sum())


def _trap_nonuniform(a):
    w = np.zeros(a.size)
    d = np.diff(a)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _single(path: Path) -> np.ndarray:
    if path.values.ndim != 1:
        raise DomainError("local-time routines take a single path; loop over replicates")
    return path.values


def _check_resolution(values, mol: Mollifier):
    # resolution proxy: RMS one-step increment of the path values
    if values.size < 2:
        return
    res = float(np.sqrt(np.mean(np.diff(values) ** 2)))
    if 2.0 * mol.bandwidth < 4.0 * res:
        raise ConfigError(
            f"bandwidth {mol.bandwidth:.4g} is below the path resolution: "
            f"2h = {2 * mol.bandwidth:.4g} < 4 x {res:.4g}")


def _space_nodes(path: Path, x):
    c = path.coords
    h = _uniform_step(c)
    lo, hi = _index(c, min(0.0, x), h), _index(c, max(0.0, x), h)
    return h, lo, hi


def _smoothed(values, weights, levels, mol: Mollifier, chunk=64):
    out = np.empty(levels.size)
    for i in range(0, levels.size, chunk):
        a = levels[i:i + chunk, None]
        out[i:i + chunk] = (mol.kernel(values[None, :] - a) * weights).sum(axis=-1)
    return out


def occupation_histogram(path: Path, x: float, bins=N_LEVELS) -> OccupationMeasure:
    """Exact occupation measure of the linearly interpolated space path over ``I_x``.

    Parameters
    ----------
    bins : int or array_like
        Bin count (the edges then span the path range with a 5% margin)
        or explicit increasing edges. Edges not covering the path are
        extended with the same spacing and a warning.
    """
    v = _single(path)
    h, lo, hi = _space_nodes(path, x)
    seg = v[lo:hi + 1]
    vmin, vmax = float(seg.min()), float(seg.max())
    if np.ndim(bins) == 0:
        nb = int(bins)
        span = max(vmax - vmin, 1e-12)
        edges = np.linspace(vmin - 0.05 * span, vmax + 0.05 * span, nb + 1)
    else:
        edges = np.asarray(bins, dtype=float)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise DomainError("bin edges must be strictly increasing")
        if vmin < edges[0] or vmax >= edges[-1]:
            w = float(edges[1] - edges[0])
            n_lo = max(0, math.ceil((edges[0] - vmin) / w))
            n_hi = max(0, math.floor((vmax - edges[-1]) / w) + 1)
            warnings.warn(f"path leaves the bin range; adding {n_lo + n_hi} bins", RuntimeWarning)
            edges = np.concatenate([edges[0] - w * np.arange(n_lo, 0, -1), edges,
                                    edges[-1] + w * np.arange(1, n_hi + 1)])
    mass = np.zeros(edges.size - 1)
    if hi == lo:
        return OccupationMeasure(edges, mass)
    a, b = seg[:-1], seg[1:]
    s_lo, s_hi = np.minimum(a, b), np.maximum(a, b)
    flat = s_hi - s_lo <= 1e-300
    if np.any(flat):
        j = np.clip(np.searchsorted(edges, s_lo[flat], side="right") - 1, 0, mass.size - 1)
        np.add.at(mass, j, h)
    lo_v, hi_v, span = s_lo[~flat], s_hi[~flat], (s_hi - s_lo)[~flat]
    # cumulative occupation of each sloped segment below every edge
    cdf = np.zeros(edges.size)
    for i in range(0, lo_v.size, 2048):
        frac = np.clip((edges[None, :] - lo_v[i:i + 2048, None]) / span[i:i + 2048, None], 0.0, 1.0)
        cdf += h * frac.sum(axis=0)
    mass += np.diff(cdf)
    return OccupationMeasure(edges, mass)


def local_time_space(path: Path, a, x: float, mollifier: Mollifier, check=True):
    """Kernel local time ``L(a, x) = int_{I_x} K_h(W_y - a) dy`` of a space path.

    Parameters
    ----------
    a : float or array_like
        Level(s).
    check : bool
        Raise :class:`ConfigError` if ``2h < 4`` times the path resolution.
    """
    v = _single(path)
    if check:
        _check_resolution(v, mollifier)
    h, lo, hi = _space_nodes(path, x)
    w = _trap_weights(hi - lo + 1, h)
    lv = np.atleast_1d(np.asarray(a, dtype=float))
    res = _smoothed(v[lo:hi + 1], w, lv, mollifier)
    return float(res[0]) if np.ndim(a) == 0 else res


def weighted_local_time_time(path: Path, a, t: float, mollifier: Mollifier, check=True):
    """Weighted local time ``int_0^t K_h(B_s - a) ds / (2 sqrt(pi s))`` of a time path.

    The weight is integrated exactly against ``d sqrt(s)``.
    """
    v = _single(path)
    if check:
        _check_resolution(v, mollifier)
    _, _, n_t = _time_setup(path, t)
    w = sqrt_time_weights(path.coords[:n_t + 1]) / math.sqrt(math.pi)
    lv = np.atleast_1d(np.asarray(a, dtype=float))
    res = _smoothed(v[:n_t + 1], w, lv, mollifier)
    return float(res[0]) if np.ndim(a) == 0 else res


def local_time_profile(path: Path, at: float, mollifier: Mollifier, n_levels: int = N_LEVELS,
                       seed: int = 0, check=True) -> LocalTimeEstimate:
    """Local time on ``n_levels`` levels spanning the path range plus three bandwidths.

    ``path.kind`` selects the plain (space) or weighted (time) version;
    ``at`` is ``x`` or ``t`` respectively.
    """
    v = _single(path)
    if path.kind == "space":
        _, lo, hi = _space_nodes(path, at)
        seg = v[lo:hi + 1]
    else:
        _, _, n_t = _time_setup(path, at)
        seg = v[:n_t + 1]
    pad = 3.0 * mollifier.bandwidth if mollifier.profile == "bump" else mollifier.support
    levels = np.linspace(seg.min() - pad, seg.max() + pad, n_levels)
    if path.kind == "space":
        mass, kind = local_time_space(path, levels, at, mollifier, check), "plain"
    else:
        mass, kind = weighted_local_time_time(path, levels, at, mollifier, check), "sqrt-time-weighted"
    return LocalTimeEstimate(levels, mass, mollifier.bandwidth, kind, seed)


def stieltjes_sum(f, est: LocalTimeEstimate) -> float:
    """Midpoint sum ``sum_k f((a_k + a_{k+1}) / 2) (L(a_{k+1}) - L(a_k))``."""
    f = get_function(f) if not callable(f) else f
    mid = 0.5 * (est.levels[1:] + est.levels[:-1])
    return float(np.sum(f(mid) * np.diff(est.mass)))


def bouleau_yor_residual(f, path: Path, x: float, delta: float, mollifier: Mollifier,
                         n_levels: int = N_LEVELS, check=True) -> float:
    """Residual ``I1_delta(f, x) + int f(a) L(da, x)`` of the Bouleau-Yor identity.

    The Stieltjes integral is a midpoint sum over the kernel local time.
    """
    f = get_function(f) if not isinstance(f, TestFunction) else f
    est = local_time_profile(path, x, mollifier, n_levels, check=check)
    return float(spatial_pqc(path, f, x, delta)) + stieltjes_sum(f, est)


def tanaka_residual_space(a: float, path: Path, x: float, delta: float, mollifier: Mollifier,
                          check=True):
    """Residuals of the three Tanaka identities for a space path.

    With ``s = sign(x)`` (integrals over ``I_x`` oriented from 0 to ``x``)
    and the forward integral standing in for ``delta W``::

        r1 = (W_x - a)^+ - (W_0 - a)^+ - s (int 1_{W > a} d-W + L(a, x) / 2)
        r2 = (W_x - a)^- - (W_0 - a)^- - s (-int 1_{W < a} d-W + L(a, x) / 2)
        r3 = r1 + r2   (the |W - a| identity)

    Returns
    -------
    tuple of float
    """
    v = _single(path)
    h, lo, hi = _space_nodes(path, x)
    i0, ix = _index(path.coords, 0.0, h), _index(path.coords, x, h)
    orient = 1.0 if x >= 0 else -1.0
    lt = local_time_space(path, a, x, mollifier, check)
    up = float(forward_integral_space(path, step_up(a), x, delta))
    down = float(forward_integral_space(path, step_down(a), x, delta))
    w0, wx = v[i0], v[ix]
    r1 = max(wx - a, 0.0) - max(w0 - a, 0.0) - orient * (up + 0.5 * lt)
    r2 = max(a - wx, 0.0) - max(a - w0, 0.0) - orient * (-down + 0.5 * lt)
    return r1, r2, r1 + r2


def tanaka_residual_time(a: float, path: Path, t: float, eps: float, mollifier: Mollifier,
                         check=True):
    """Residuals of the Tanaka identities for a time path.

    ``delta B`` is the numerical divergence integral of
    :func:`heatqv.qcov.divergence_integral_time` and the local time is the
    weighted one::

        r1 = (B_t - a)^+ - (B_0 - a)^+ - int 1_{B > a} delta B - Lw(a, t) / 2
        r2 = (B_t - a)^- - (B_0 - a)^- + int 1_{B < a} delta B - Lw(a, t) / 2
        r3 = r1 + r2 = |B_t - a| - |B_0 - a| - int sign(B - a) delta B - Lw(a, t)
    """
    v = _single(path)
    _, _, n_t = _time_setup(path, t, eps)
    lt = weighted_local_time_time(path, a, t, mollifier, check)
    up = float(divergence_integral_time(path, step_up(a), t, eps))
    down = float(divergence_integral_time(path, step_down(a), t, eps))
    b0, bt = v[0], v[n_t]
    r1 = max(bt - a, 0.0) - max(b0 - a, 0.0) - up - 0.5 * lt
    r2 = max(a - bt, 0.0) - max(a - b0, 0.0) + down - 0.5 * lt
    return r1, r2, r1 + r2

