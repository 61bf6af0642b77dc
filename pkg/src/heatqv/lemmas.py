"""Executable inequality checks on the covariance of ``u``.

Each check evaluates both sides of an estimate on one admissible
parameter draw. Estimates with an explicit constant report pass/fail and
slack (right side minus left side). Estimates with an unnamed constant
report the ratio of the left side to the right-side shape; a sweep then
judges whether the supremum (and, for two-sided estimates, the infimum)
of that ratio is finite and stable under rescaling.

Check identifiers
-----------------
``"2.1"``  ``E(u(t,x) - u(s,y))^2 <= C (sqrt(t-s) + |x-y|)``
``"2.2"``  ``|E u(r,x)(u(t,x) - u(s,x))| <= (3/sqrt(2 pi)) sqrt|t-s|``
``"2.3"``  ``|E u(t,x)(u(t,y) - u(t,z))| <= |y-z| / 4``
``"2.4"``  ``|E (u(t)-u(s))(u(t')-u(s'))| <= C (t'-s') sqrt(t-s) / sqrt(ts(s-s')(t-t'))``
``"2.5"``  ``|E (u(t,x)-u(t,y))(u(t,x')-u(t,y'))|
           <= (x-y)(x'-y') e^{-(y-x')^2/4t} / (4 sqrt(pi t))``
``"2.6"``  ``sqrt(s(t-s))/pi <= sigma_t^2 sigma_s^2 - mu^2 <= 3 sqrt(s(t-s))/pi``
``"2.7"``  ``sigma^4 - mu^2 ~ (x-y) t / (sqrt t + x - y)`` and
           ``sigma^2 - mu ~ (x-y) sqrt t / (sqrt t + x - y)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .errors import DomainError

__all__ = [
    "LEMMAS",
    "LemmaDraw",
    "LemmaCheck",
    "SweepResult",
    "lemma_bounds_check",
    "draw_parameters",
    "lemma_sweep",
]

LEMMAS = ("2.1", "2.2", "2.3", "2.4", "2.5", "2.6", "2.7")
# checks whose constant is stated explicitly
EXPLICIT = {"2.2": 3.0 / math.sqrt(2.0 * math.pi), "2.3": 0.25,
            "2.5": None, "2.6": None}
_REL = 1e-12  # rounding allowance when comparing the two sides


@dataclass(frozen=True)
class LemmaDraw:
    """Parameters for one check; fields not used by a lemma are ignored.

    Times ``t, s, r, t2, s2`` (``t2``, ``s2`` are the primed times of
    check ``"2.4"``) and sites ``x, y, z, x2, y2`` (``x2``, ``y2`` primed
    sites of check ``"2.5"``).
    """

    t: float = 1.0
    s: float = 0.5
    r: float = 1.0
    t2: float = 0.0
    s2: float = 0.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    x2: float = 0.0
    y2: float = 0.0

    def scaled(self, c: float) -> "LemmaDraw":
        """Parabolic rescaling: times by ``c``, sites by ``sqrt(c)``."""
        rc = math.sqrt(c)
        return LemmaDraw(self.t * c, self.s * c, self.r * c, self.t2 * c,
                         self.s2 * c, self.x * rc, self.y * rc, self.z * rc,
                         self.x2 * rc, self.y2 * rc)


@dataclass(frozen=True)
class LemmaCheck:
    """Outcome of one check.

    Attributes
    ----------
    passed : bool
        Explicit-constant checks: the inequality holds. Unnamed-constant
        checks: the ratio is finite.
    slack : float
        ``rhs - lhs`` for explicit constants, NaN otherwise.
    lhs, rhs : float
        The two sides (``rhs`` is the bare shape when no constant is given).
    ratio : float
        ``lhs / rhs``; for check ``"2.7"`` the Gram-determinant ratio.
    ratio2 : float
        Second ratio (``"2.7"``: variance-gap ratio; ``"2.6"``: upper side), or NaN.
    rejected : bool
        The draw violates the ordering constraints; nothing was evaluated.
    degenerate : bool
        Both sides vanish identically (e.g. ``x = y`` in check ``"2.5"``).
    """

    lemma: str
    passed: bool
    slack: float
    lhs: float
    rhs: float
    ratio: float
    ratio2: float = float("nan")
    rejected: bool = False
    degenerate: bool = False


def _rejected(which):
    nan = float("nan")
    return LemmaCheck(which, False, nan, nan, nan, nan, rejected=True)


def _ratio(a, b):
    if b == 0.0:
        return 0.0 if a == 0.0 else math.inf
    return a / b


def lemma_bounds_check(which: str, q: LemmaDraw,
                       quad: K.QuadratureConfig = K.DEFAULT_QUAD) -> LemmaCheck:
    """Evaluate one inequality check on one draw.

    Parameters
    ----------
    which : str
        One of :data:`LEMMAS`.
    q : LemmaDraw
    quad : QuadratureConfig

    Returns
    -------
    LemmaCheck
        ``rejected`` is set when ``q`` violates the check's ordering.
    """
    nan = float("nan")
    if which == "2.1":
        if not (q.t >= q.s > 0):
            return _rejected(which)
        lhs = K.increment_second_moment(q.t, q.x, q.s, q.y, quad)
        shape = math.sqrt(q.t - q.s) + abs(q.x - q.y)
        ratio = _ratio(lhs, shape)
        return LemmaCheck(which, math.isfinite(ratio), nan, lhs, shape, ratio,
                          degenerate=shape == 0.0)

    if which == "2.2":
        if not (q.t > 0 and q.s > 0 and q.r > 0):
            return _rejected(which)
        lhs = abs(float(K.cov_time(q.r, q.t)) - float(K.cov_time(q.r, q.s)))
        shape = math.sqrt(abs(q.t - q.s))
        rhs = EXPLICIT["2.2"] * shape
        ratio = _ratio(lhs, shape)
        return LemmaCheck(which, lhs <= rhs * (1 + _REL), rhs - lhs, lhs, shape,
                          ratio, degenerate=shape == 0.0)

    if which == "2.3":
        if not q.t > 0:
            return _rejected(which)
        lhs = abs(K.cov_space(q.t, q.x, q.y, quad) - K.cov_space(q.t, q.x, q.z, quad))
        rhs = 0.25 * abs(q.y - q.z)
        return LemmaCheck(which, lhs <= rhs * (1 + _REL) + quad.abs_tol,
                          rhs - lhs, lhs, rhs, _ratio(lhs, abs(q.y - q.z)),
                          degenerate=q.y == q.z)

    if which == "2.4":
        t, s, tp, sp = q.t, q.s, q.t2, q.s2
        if not (t > s > tp > sp > 0):
            return _rejected(which)
        c = K.cov_time
        lhs = abs(float(c(t, tp) - c(s, tp) - c(t, sp) + c(s, sp)))
        shape = (tp - sp) * math.sqrt(t - s) / math.sqrt(t * s * (s - sp) * (t - tp))
        return LemmaCheck(which, math.isfinite(_ratio(lhs, shape)), nan, lhs,
                          shape, _ratio(lhs, shape))

    if which == "2.5":
        t, x, y, xp, yp = q.t, q.x, q.y, q.x2, q.y2
        if not t > 0:
            return _rejected(which)
        if x == y or xp == yp:
            return LemmaCheck(which, True, 0.0, 0.0, 0.0, 0.0, degenerate=True)
        if not (x > y > xp > yp):
            return _rejected(which)
        cs = lambda a, b: K.cov_space(t, a, b, quad)  # noqa: E731
        lhs = abs(cs(x, xp) - cs(x, yp) - cs(y, xp) + cs(y, yp))
        shape = (x - y) * (xp - yp) * math.exp(-(y - xp) ** 2 / (4.0 * t))
        rhs = shape / (4.0 * math.sqrt(t * math.pi))
        return LemmaCheck(which, lhs <= rhs * (1 + _REL) + quad.abs_tol,
                          rhs - lhs, lhs, rhs, _ratio(lhs, rhs))

    if which == "2.6":
        t, s = q.t, q.s
        if not (t > s > 0):
            return _rejected(which)
        m = K.moments_time_pair(t, s)
        # Gram determinant from the moments themselves, checked against rho2
        gram = m.sigma2_t * m.sigma2_s - m.mu ** 2
        lo = math.sqrt(s) * math.sqrt(t - s) / math.pi
        hi = 3.0 * lo
        ident_ok = abs(gram - m.rho2) <= 1e-10 * max(m.sigma2_t * m.sigma2_s, 1e-300)
        ok = ident_ok and lo * (1 - _REL) <= m.rho2 <= hi * (1 + _REL)
        return LemmaCheck(which, ok, min(m.rho2 - lo, hi - m.rho2), m.rho2, lo,
                          _ratio(m.rho2, lo), _ratio(m.rho2, hi))

    if which == "2.7":
        t, x, y = q.t, q.x, q.y
        if not t > 0:
            return _rejected(which)
        if x == y:
            return LemmaCheck(which, True, nan, 0.0, 0.0, 0.0, 0.0, degenerate=True)
        if not x > y:
            return _rejected(which)
        d = x - y
        v = math.sqrt(t / math.pi)
        mu = K.cov_space(t, x, y, quad)
        gram = (v - mu) * (v + mu)
        shape1 = d * t / (math.sqrt(t) + d)
        shape2 = d * math.sqrt(t) / (math.sqrt(t) + d)
        r1, r2 = _ratio(gram, shape1), _ratio(v - mu, shape2)
        ok = math.isfinite(r1) and math.isfinite(r2) and r1 > 0 and r2 > 0
        return LemmaCheck(which, ok, nan, gram, shape1, r1, r2)

    raise DomainError(f"unknown lemma {which!r}; expected one of {LEMMAS}")


def draw_parameters(which: str, n: int, rng: np.random.Generator) -> list[LemmaDraw]:
    """Draw ``n`` admissible parameter sets at unit scale."""
    u = lambda lo, hi, size=n: rng.uniform(lo, hi, size)  # noqa: E731
    out = []
    if which == "2.1":
        t = u(0.01, 2.0)
        s = t * u(0.0, 1.0)
        s = np.maximum(s, 1e-6)
        x, y = u(-2, 2), u(-2, 2)
        out = [LemmaDraw(t=a, s=b, x=c, y=d) for a, b, c, d in zip(t, s, x, y)]
    elif which == "2.2":
        r, t, s = u(0.01, 2), u(0.01, 2), u(0.01, 2)
        out = [LemmaDraw(r=a, t=b, s=c) for a, b, c in zip(r, t, s)]
    elif which == "2.3":
        t = u(0.05, 2)
        x, y, z = u(-2, 2), u(-2, 2), u(-2, 2)
        out = [LemmaDraw(t=a, x=b, y=c, z=d) for a, b, c, d in zip(t, x, y, z)]
    elif which == "2.4":
        pts = np.sort(u(0.01, 2, (n, 4)), axis=1)
        out = [LemmaDraw(s2=p[0], t2=p[1], s=p[2], t=p[3]) for p in pts]
    elif which == "2.5":
        t = u(0.05, 2)
        pts = np.sort(u(-2, 2, (n, 4)), axis=1)
        out = [LemmaDraw(t=a, y2=p[0], x2=p[1], y=p[2], x=p[3]) for a, p in zip(t, pts)]
    elif which == "2.6":
        t = u(0.01, 2)
        s = t * u(1e-6, 1.0)
        out = [LemmaDraw(t=a, s=b) for a, b in zip(t, s)]
    elif which == "2.7":
        t = u(0.05, 2)
        pts = np.sort(u(-2, 2, (n, 2)), axis=1)
        out = [LemmaDraw(t=a, y=p[0], x=p[1]) for a, p in zip(t, pts)]
    else:
        raise DomainError(f"unknown lemma {which!r}")
    return out


@dataclass
class SweepResult:
    """Summary of an inequality sweep.

    Attributes
    ----------
    pass_rate : float
        Fraction of non-rejected draws whose check passed.
    sup_ratio, inf_ratio : dict
        Per scale, the supremum and infimum of the left/shape ratio.
    stability : float
        ``max / min`` of the per-scale suprema (and infima for two-sided
        estimates); 1 means scale-free.
    stable : bool
        Every per-scale extremum is finite, positive, and within +-50% of
        the median across scales.
    max_ratio : float
        Largest observed ratio over all draws and scales.
    """

    lemma: str
    n_draws: int
    n_rejected: int
    pass_rate: float
    scales: list
    sup_ratio: dict = field(default_factory=dict)
    inf_ratio: dict = field(default_factory=dict)
    sup_ratio2: dict = field(default_factory=dict)
    inf_ratio2: dict = field(default_factory=dict)
    stability: float = float("nan")
    stable: bool = False
    max_ratio: float = float("nan")


def _stable(values, band=0.5):
    v = np.asarray(list(values), dtype=float)
    if v.size == 0 or not np.all(np.isfinite(v)) or np.any(v <= 0):
        return False, math.inf
    med = np.median(v)
    return bool(np.all(np.abs(v / med - 1.0) <= band)), float(v.max() / v.min())


def lemma_sweep(which: str, n_draws: int = 10_000, seed: int = 0,
                scales=(1e-2, 1e-1, 1.0, 1e1),
                quad: K.QuadratureConfig = K.DEFAULT_QUAD) -> SweepResult:
    """Run ``n_draws`` evaluations of one check spread over rescaled draws.

    ``n_draws // len(scales)`` base draws are taken at unit scale and each
    is evaluated at every scale ``c`` (times times ``c``, sites times
    ``sqrt(c)``), so scale dependence of the ratio is isolated from
    sampling noise. The scales default to a 3-decade span.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_base = max(1, n_draws // len(scales))
    base = draw_parameters(which, n_base, rng)
    res = SweepResult(which, 0, 0, float("nan"), list(scales))
    passed = total = 0
    all_ratios = []
    for c in scales:
        r1, r2 = [], []
        for q in base:
            chk = lemma_bounds_check(which, q.scaled(c), quad)
            res.n_draws += 1
            if chk.rejected:
                res.n_rejected += 1
                continue
            total += 1
            passed += bool(chk.passed)
            if not chk.degenerate:
                r1.append(chk.ratio)
                r2.append(chk.ratio2)
        r1 = np.asarray(r1, dtype=float)
        r2 = np.asarray(r2, dtype=float)
        all_ratios.append(r1)
        res.sup_ratio[c] = float(r1.max()) if r1.size else float("nan")
        res.inf_ratio[c] = float(r1.min()) if r1.size else float("nan")
        if np.any(np.isfinite(r2)):
            res.sup_ratio2[c] = float(np.nanmax(r2))
            res.inf_ratio2[c] = float(np.nanmin(r2))
    res.pass_rate = passed / total if total else float("nan")
    res.max_ratio = float(np.concatenate(all_ratios).max()) if all_ratios else float("nan")
    checks = [res.sup_ratio.values()]
    if which == "2.7":
        # two-sided estimate: both extremes of both ratios must be scale-stable
        checks += [res.inf_ratio.values(), res.sup_ratio2.values(),
                   res.inf_ratio2.values()]
    oks, spreads = zip(*(_stable(v) for v in checks))
    res.stable = all(oks)
    res.stability = max(spreads)
    return res
