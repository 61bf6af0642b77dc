"""Covariance, variance and increment kernels of the stochastic heat equation.

The process is the mild solution

    u(t, x) = int_0^t int_R p(t - r, x - z) X(dr, dz),   u(0, .) = 0,

driven by space-time white noise, with heat kernel
``p(t, x) = (2 pi t)^{-1/2} exp(-x^2 / (2 t))``. Its law is the centred
Gaussian field with covariance

    R(t, x; s, y) = (2 pi)^{-1/2} int_0^s (t + s - 2r)^{-1/2}
                    exp(-(x - y)^2 / (2 (t + s - 2r))) dr,    t >= s.

Functions accepting a :class:`QuadratureConfig` evaluate the defining
integrals by adaptive quadrature after removing the square-root endpoint
singularity with a quadratic substitution. Functions with the ``_closed``
suffix evaluate exact antiderivatives in terms of ``erfc`` and are
vectorised; they are used to fill large covariance matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError

__all__ = [
    "QuadratureConfig",
    "CovQuery",
    "QuadResult",
    "Moments",
    "DEFAULT_QUAD",
    "heat_kernel",
    "variance",
    "cov_time",
    "cov_spacetime",
    "cov_spacetime_closed",
    "cov_space",
    "cov_space_closed",
    "tail_ratio",
    "delta_increment",
    "increment_second_moment",
    "moments_time_pair",
    "qv_bias_space",
    "qv_bias_time",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for adaptive quadrature.

    Parameters
    ----------
    rel_tol, abs_tol : float
        Requested relative and absolute accuracy, both positive.
    max_subdivisions : int
        Upper bound on the number of adaptive subintervals.
    """

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_subdivisions: int = 2048

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if int(self.max_subdivisions) < 1:
            raise DomainError("max_subdivisions must be >= 1")


DEFAULT_QUAD = QuadratureConfig()


@dataclass(frozen=True)
class CovQuery:
    """A pair of space-time points ``(t, x)`` and ``(s, y)``."""

    t: float
    s: float
    x: float = 0.0
    y: float = 0.0

    def __post_init__(self):
        for name in ("t", "s", "x", "y"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.t < 0 or self.s < 0:
            raise DomainError(f"times must be >= 0, got t={self.t}, s={self.s}")

    def normalized(self) -> "CovQuery":
        """Return the query with ``s <= t`` (points swapped if needed)."""
        if self.s > self.t:
            return CovQuery(self.s, self.t, self.y, self.x)
        return self


@dataclass(frozen=True)
class QuadResult:
    """Quadrature value with its absolute error estimate."""

    value: float
    error: float

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class Moments:
    """Second moments of the pair ``(u(t, x), u(s, x))``.

    ``rho2`` is the Gram determinant ``sigma2_t * sigma2_s - mu**2``.
    """

    sigma2_t: float
    sigma2_s: float
    mu: float
    rho2: float
    degenerate: bool = False


def _quad(func, a, b, quad: QuadratureConfig) -> QuadResult:
    """Adaptive Gauss-Kronrod on ``[a, b]``; raise if the tolerance is missed."""
    if b <= a:
        return QuadResult(0.0, 0.0)
    val, err, info = integrate.quad(
        func, a, b,
        epsabs=quad.abs_tol, epsrel=quad.rel_tol,
        limit=int(quad.max_subdivisions), full_output=True,
    )[:3]
    target = max(quad.abs_tol, quad.rel_tol * abs(val))
    # QUADPACK's estimate is conservative; allow a small safety factor
    # before declaring failure.
    if not math.isfinite(val) or err > 10.0 * target:
        raise QuadratureError(
            f"quadrature did not converge on [{a}, {b}] "
            f"({info.get('last', '?')} subintervals, error {err:.3e})",
            value=val, error=err,
        )
    return QuadResult(float(val), float(err))


def _check_time(name, v, strict=False):
    if not math.isfinite(v) or v < 0 or (strict and v == 0):
        cond = "> 0" if strict else ">= 0"
        raise DomainError(f"{name} must be {cond}, got {v!r}")


def heat_kernel(t, x):
    """Gaussian heat kernel ``(2 pi t)^{-1/2} exp(-x^2 / (2t))``.

    Parameters
    ----------
    t : float or array_like
        Time, strictly positive.
    x : float or array_like
        Space coordinate.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("heat_kernel requires t > 0")
    out = np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return out[()] if out.ndim == 0 else out


def variance(t):
    """Variance ``E u(t, x)^2 = sqrt(t / pi)``, independent of ``x``."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t >= 0)):
        raise DomainError("variance requires t >= 0")
    out = np.sqrt(t) / _SQRT_PI
    return out[()] if out.ndim == 0 else out


def cov_time(t, s):
    """Covariance in time at a fixed site.

    ``E u(t, x) u(s, x) = (2 pi)^{-1/2} (sqrt(t + s) - sqrt|t - s|)``.
    Vectorised over broadcastable ``t`` and ``s``.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(t >= 0)) or np.any(~(s >= 0)):
        raise DomainError("cov_time requires t, s >= 0")
    out = (np.sqrt(t + s) - np.sqrt(np.abs(t - s))) / _SQRT_2PI
    return out[()] if out.ndim == 0 else out


def cov_spacetime(q: CovQuery, quad: QuadratureConfig = DEFAULT_QUAD,
                  full_output: bool = False):
    """Covariance ``E u(t, x) u(s, y)`` by adaptive quadrature.

    With ``s <= t`` the integrand ``(t + s - 2r)^{-1/2} exp(...)`` is
    singular at ``r = s`` when ``t = s``; the substitution
    ``r = s - v^2`` turns it into a smooth integrand on ``[0, sqrt(s)]``.

    Parameters
    ----------
    q : CovQuery
        The two space-time points. The result is symmetric under
        exchanging them.
    quad : QuadratureConfig
    full_output : bool
        If true, return a :class:`QuadResult` with the error estimate.

    Raises
    ------
    QuadratureError
        If the requested tolerance is not met.
    """
    q = q.normalized()
    t, s = q.t, q.s
    d2 = (q.x - q.y) ** 2
    gap = t - s

    def integrand(v):
        w = gap + 2.0 * v * v
        if w <= 0.0:
            # only reachable when t == s and v == 0: limit of 2v / sqrt(2 v^2)
            return math.sqrt(2.0) if d2 == 0.0 else 0.0
        return 2.0 * v * math.exp(-d2 / (2.0 * w)) / math.sqrt(w)

    res = _quad(integrand, 0.0, math.sqrt(s), quad)
    res = QuadResult(res.value / _SQRT_2PI, res.error / _SQRT_2PI)
    return res if full_output else res.value


def _g_antider(w, d):
    """``G(w) = int_0^w v^{-1/2} exp(-d^2 / (2v)) dv`` in closed form."""
    w = np.asarray(w, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        sw = np.sqrt(w)
        z = d / (np.sqrt(2.0) * sw)
        # exp(-z^2) * (2 sqrt(w) - sqrt(2 pi) d erfcx(z)) avoids underflow
        # of the two nearly cancelling tails for large z
        g = np.exp(-z * z) * (2.0 * sw - _SQRT_2PI * d * special.erfcx(z))
    return np.where(w > 0.0, g, 0.0)


def cov_spacetime_closed(t, x, s, y):
    """Closed-form covariance ``E u(t, x) u(s, y)``, vectorised.

    Substituting ``w = t + s - 2r`` reduces the defining integral to
    ``(G(t + s) - G(|t - s|)) / (2 sqrt(2 pi))`` with
    ``G(w) = 2 sqrt(w) e^{-d^2/2w} - sqrt(2 pi) |d| erfc(|d| / sqrt(2w))``.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(~(t >= 0)) or np.any(~(s >= 0)):
        raise DomainError("cov_spacetime_closed requires t, s >= 0")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    out = (_g_antider(t + s, d) - _g_antider(np.abs(t - s), d)) / (2.0 * _SQRT_2PI)
    return out[()] if np.ndim(out) == 0 else out


def cov_space(t: float, x: float, y: float,
              quad: QuadratureConfig = DEFAULT_QUAD, full_output: bool = False):
    """Equal-time covariance ``E u(t, x) u(t, y)`` by quadrature.

    Evaluates ``(2 sqrt(pi))^{-1} int_0^t r^{-1/2} exp(-(x-y)^2 / (4r)) dr``
    after the substitution ``r = v^2``.
    """
    _check_time("t", t)
    d2 = (x - y) ** 2
    if d2 == 0.0:
        val = math.sqrt(t / math.pi)
        res = QuadResult(val, 0.0)
    else:
        res = _quad(lambda v: math.exp(-d2 / (4.0 * v * v)) if v > 0 else 0.0,
                    0.0, math.sqrt(t), quad)
        res = QuadResult(res.value / _SQRT_PI, res.error / _SQRT_PI)
    return res if full_output else res.value


def cov_space_closed(t, d):
    """Closed-form equal-time covariance at separation ``d``, vectorised.

    ``sqrt(t/pi) exp(-d^2/4t) - (|d|/2) erfc(|d| / (2 sqrt t))``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(~(t >= 0)):
        raise DomainError("cov_space_closed requires t >= 0")
    d = np.abs(np.asarray(d, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = d / (2.0 * np.sqrt(t))
        out = np.exp(-z * z) * (np.sqrt(t / np.pi) - 0.5 * d * special.erfcx(z))
    out = np.where(t > 0, out, 0.0)
    return out[()] if np.ndim(out) == 0 else out


def tail_ratio(t: float, d: float, quad: QuadratureConfig = DEFAULT_QUAD,
               method: str = "closed"):
    """Normalised equal-time covariance profile.

    ``f(d) = d int_d^inf s^{-2} e^{-s^2/4t} ds
           = e^{-d^2/4t} - (d / 2t) int_d^inf e^{-r^2/4t} dr``,
    so that ``cov_space(t, x, x + d) = sqrt(t/pi) f(d)``. ``f(0) = 1`` and
    ``f`` is Lipschitz with constant ``sqrt(pi) / (2 sqrt t)``.

    Parameters
    ----------
    method : {"closed", "quad"}
        Evaluate the Gaussian tail through ``erfc`` or by quadrature.
    """
    _check_time("t", t, strict=True)
    if not (d >= 0):
        raise DomainError(f"d must be >= 0, got {d!r}")
    if method == "closed":
        tail = math.sqrt(math.pi * t) * math.erfc(d / (2.0 * math.sqrt(t)))
    elif method == "quad":
        # r = d + v / (1 - v) maps [0, 1) onto [d, inf)
        def g(v):
            if v >= 1.0:
                return 0.0
            r = d + v / (1.0 - v)
            return math.exp(-r * r / (4.0 * t)) / (1.0 - v) ** 2
        tail = _quad(g, 0.0, 1.0, quad).value
    else:
        raise DomainError(f"unknown method {method!r}")
    return math.exp(-d * d / (4.0 * t)) - d / (2.0 * t) * tail


def delta_increment(s: float, t: float, z: float,
                    quad: QuadratureConfig = DEFAULT_QUAD,
                    full_output: bool = False):
    """Increment discrepancy ``Delta(s, t, z)`` for ``0 <= s <= t``.

    Split as the closed part
    ``sqrt(2t) + sqrt(2s) + (2 - sqrt 2) sqrt(t - s) - 2 sqrt(t + s)`` plus
    ``int_0^s 2 (t + s - 2r)^{-1/2} (1 - exp(-z^2 / (2(t + s - 2r)))) dr``,
    the latter by quadrature with ``r = s - v^2``.
    """
    _check_time("s", s)
    _check_time("t", t)
    if s > t:
        raise DomainError(f"delta_increment requires s <= t, got s={s}, t={t}")
    closed = (math.sqrt(2.0 * t) + math.sqrt(2.0 * s)
              + (2.0 - math.sqrt(2.0)) * math.sqrt(t - s) - 2.0 * math.sqrt(t + s))
    z2 = z * z
    if z2 == 0.0 or s == 0.0:
        res = QuadResult(closed, 0.0)
    else:
        gap = t - s

        def integrand(v):
            w = gap + 2.0 * v * v
            if w <= 0.0:
                return 0.0
            return 4.0 * v * -math.expm1(-z2 / (2.0 * w)) / math.sqrt(w)

        r = _quad(integrand, 0.0, math.sqrt(s), quad)
        res = QuadResult(closed + r.value, r.error)
    return res if full_output else res.value


def increment_second_moment(t: float, x: float, s: float, y: float,
                            quad: QuadratureConfig = DEFAULT_QUAD,
                            route: str = "delta"):
    """Second moment ``E (u(t, x) - u(s, y))^2``.

    Parameters
    ----------
    route : {"delta", "covariance"}
        ``"delta"`` uses ``(2 pi)^{-1/2} (sqrt(2(t - s)) + Delta(s, t, x - y))``;
        ``"covariance"`` expands ``var(t) + var(s) - 2 cov``.
    """
    q = CovQuery(t, s, x, y).normalized()
    if route == "delta":
        dlt = delta_increment(q.s, q.t, q.x - q.y, quad)
        return (math.sqrt(2.0 * (q.t - q.s)) + dlt) / _SQRT_2PI
    if route == "covariance":
        return (math.sqrt(q.t / math.pi) + math.sqrt(q.s / math.pi)
                - 2.0 * cov_spacetime(q, quad))
    raise DomainError(f"unknown route {route!r}")


def moments_time_pair(t: float, s: float) -> Moments:
    """Moments of ``(u(t, x), u(s, x))`` for ``0 <= s <= t``.

    ``rho2`` is evaluated from the identity
    ``(1/pi) (sqrt(ts) - t + sqrt(t^2 - s^2))``; the pair is flagged
    degenerate (and ``rho2 = 0``) when ``s = t`` or ``s = 0``.
    """
    _check_time("t", t)
    _check_time("s", s)
    if s > t:
        raise DomainError(f"moments_time_pair requires s <= t, got s={s}, t={t}")
    s2t = math.sqrt(t) / _SQRT_PI
    s2s = math.sqrt(s) / _SQRT_PI
    mu = float(cov_time(t, s))
    if s == t or s == 0.0:
        return Moments(s2t, s2s, mu, 0.0, degenerate=True)
    # sqrt(ts) - t + sqrt(t^2 - s^2) rewritten without cancellation near s -> 0
    root = math.sqrt(t * t - s * s)
    rho2 = (math.sqrt(t) * math.sqrt(s) - s * s / (t + root)) / math.pi
    return Moments(s2t, s2s, mu, max(rho2, 0.0))


def qv_bias_space(t: float, eps: float, quad: QuadratureConfig | None = None):
    """Signed bias ``E (W_{y + eps} - W_y)^2 - eps`` at time ``t``.

    The exact second moment is
    ``eps erfc(eps / 2 sqrt t) + 2 sqrt(t/pi) (1 - e^{-eps^2/4t})``; the
    bias is negative with magnitude ``~ eps^2 / (2 sqrt(pi t))``. When
    ``quad`` is given the moment is computed by quadrature of
    ``pi^{-1/2} int_0^t r^{-1/2} (1 - e^{-eps^2/4r}) dr`` instead.
    """
    _check_time("t", t, strict=True)
    if not eps > 0:
        raise DomainError("eps must be > 0")
    if quad is None:
        z = eps / (2.0 * math.sqrt(t))
        return (-eps * math.erf(z)
                - 2.0 * math.sqrt(t / math.pi) * math.expm1(-z * z))
    e2 = eps * eps
    r = _quad(lambda v: 2.0 * -math.expm1(-e2 / (4.0 * v * v)) if v > 0 else 2.0,
              0.0, math.sqrt(t), quad)
    return r.value / _SQRT_PI - eps


def qv_bias_time(s: float, eps: float):
    """Signed bias ``E (B_{s + eps} - B_s)^2 - sqrt(2 eps / pi)``.

    Equals ``(2 pi)^{-1/2} (sqrt(2(s + eps)) - 2 sqrt(2s + eps) + sqrt(2s))``,
    evaluated as ``-2 eps^2 / ((a + c)(a + b)(b + c)) / sqrt(2 pi)`` with
    ``a, b, c`` the three square roots, which is free of cancellation.
    """
    _check_time("s", s)
    if not eps > 0:
        raise DomainError("eps must be > 0")
    a = math.sqrt(2.0 * (s + eps))
    b = math.sqrt(2.0 * s + eps)
    c = math.sqrt(2.0 * s)
    return -2.0 * eps * eps / ((a + c) * (a + b) * (b + c)) / _SQRT_2PI
