"""Monte Carlo aggregation and log-log rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

__all__ = ["Aggregate", "RateFit", "mc_aggregate", "rate_fit", "trend_violations"]

Z95 = 1.96


@dataclass(frozen=True)
class Aggregate:
    """Mean, standard error and 95% interval of a sample.

    ``se_available`` is False (and ``se``, ``ci`` are NaN) when ``n < 2``.
    """

    mean: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    se_available: bool = True

    def as_dict(self):
        return {"mean": self.mean, "se": self.se, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "n": self.n}


def mc_aggregate(samples) -> Aggregate:
    """Pairwise-summation mean, standard error and ``mean +- 1.96 se``.

    Examples
    --------
    >>> a = mc_aggregate([0.0, 2.0])
    >>> a.mean, a.se
    (1.0, 1.0)
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise DomainError("no samples to aggregate")
    mean = float(np.sum(x) / n)
    if n < 2:
        return Aggregate(mean, math.nan, math.nan, math.nan, n, False)
    d = x - mean
    se = math.sqrt(float(np.sum(d * d)) / (n - 1) / n)
    return Aggregate(mean, se, mean - Z95 * se, mean + Z95 * se, n)


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit ``log gap = intercept + alpha log level``."""

    alpha: float
    intercept: float
    r2: float
    floored: bool = False

    def as_dict(self):
        return {"alpha": self.alpha, "intercept": self.intercept, "r2": self.r2,
                "floored": self.floored}


def rate_fit(levels, gaps) -> RateFit:
    """Fit the exponent ``alpha`` in ``gap ~ C level^alpha``.

    Non-positive gaps are replaced by machine epsilon and flagged.
    Diagnostic only: no pass/fail is attached.
    """
    lv = np.asarray(levels, dtype=float)
    g = np.asarray(gaps, dtype=float)
    if lv.shape != g.shape or lv.size < 3:
        raise DomainError("rate_fit needs at least 3 (level, gap) pairs")
    if np.any(lv <= 0):
        raise DomainError("levels must be positive")
    eps = np.finfo(float).eps
    floored = bool(np.any(g <= 0))
    g = np.where(g > 0, g, eps)
    X, Y = np.log(lv), np.log(g)
    alpha, intercept = np.polyfit(X, Y, 1)
    resid = Y - (intercept + alpha * X)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(alpha), float(intercept), r2, floored)


def trend_violations(values) -> int:
    """Number of increases in a sequence ordered from coarse to fine levels."""
    v = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(v) > 0))
