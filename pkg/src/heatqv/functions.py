"""Registry of test functions ``f`` used by the covariation estimators.

A :class:`TestFunction` bundles a vectorised evaluator with optional first
and second derivatives, an optional antiderivative and a declared growth
exponent ``beta`` (``|f(z)| <= C exp(beta z^2)``). Parametrised entries are
built by factories; :func:`get_function` parses specs such as
``"indicator(-0.3, 0.3)"`` or ``"pos_part(a=0)"``.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "TestFunction",
    "REGISTRY",
    "get_function",
    "check_function",
    "constant",
    "identity",
    "square",
    "half_square",
    "cube",
    "sine",
    "indicator",
    "pos_part",
    "neg_part",
    "abs_shift",
    "step_up",
    "step_down",
    "sign_shift",
    "exp_square",
]

Fn = Callable[[np.ndarray], np.ndarray]
_POLY_BETA = 0.05  # any beta > 0 dominates polynomial growth


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A registered test function.

    Attributes
    ----------
    id : str
        Registry spec that rebuilds this function.
    eval : callable
        Vectorised ``f``.
    deriv : callable, optional
        ``f'`` where it exists as a function; ``None`` for step functions.
    deriv2 : callable, optional
        ``f''``, used for trace corrections of ``f' = deriv``.
    antideriv : callable, optional
        An antiderivative ``F`` with ``F' = f``.
    beta : float
        Declared growth exponent.
    kinks : tuple of float
        Points where ``f`` or ``f'`` is not smooth (excluded from probes).
    """

    id: str
    eval: Fn
    deriv: Optional[Fn] = None
    deriv2: Optional[Fn] = None
    antideriv: Optional[Fn] = None
    beta: float = 0.0
    kinks: tuple = ()

    # pytest would otherwise try to collect this class
    __test__ = False

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))

    def derivative(self) -> "TestFunction":
        """``f'`` as a test function (requires ``deriv``)."""
        if self.deriv is None:
            raise DomainError(f"{self.id} has no registered derivative")
        return TestFunction(f"d[{self.id}]", self.deriv, self.deriv2, None,
                            self.eval, self.beta, self.kinks)

    def antiderivative(self) -> "TestFunction":
        """``F`` with ``F' = f`` as a test function (requires ``antideriv``)."""
        if self.antideriv is None:
            raise DomainError(f"{self.id} has no registered antiderivative")
        return TestFunction(f"int[{self.id}]", self.antideriv, self.eval,
                            self.deriv, None, self.beta, self.kinks)

    def __repr__(self):
        return f"TestFunction({self.id!r})"


def _fmt(v):
    return repr(float(v))


def constant(c: float = 1.0) -> TestFunction:
    c = float(c)
    return TestFunction(f"constant({_fmt(c)})",
                        lambda x: np.full(np.shape(x), c),
                        lambda x: np.zeros(np.shape(x)),
                        lambda x: np.zeros(np.shape(x)),
                        lambda x: c * np.asarray(x, float), 0.0)


def identity() -> TestFunction:
    return TestFunction("identity", lambda x: x,
                        lambda x: np.ones(np.shape(x)),
                        lambda x: np.zeros(np.shape(x)),
                        lambda x: 0.5 * x * x, _POLY_BETA)


def square() -> TestFunction:
    return TestFunction("square", lambda x: x * x, lambda x: 2.0 * x,
                        lambda x: np.full(np.shape(x), 2.0),
                        lambda x: x ** 3 / 3.0, _POLY_BETA)


def half_square() -> TestFunction:
    return TestFunction("half_square", lambda x: 0.5 * x * x, lambda x: x,
                        lambda x: np.ones(np.shape(x)),
                        lambda x: x ** 3 / 6.0, _POLY_BETA)


def cube() -> TestFunction:
    return TestFunction("cube", lambda x: x ** 3, lambda x: 3.0 * x * x,
                        lambda x: 6.0 * x, lambda x: 0.25 * x ** 4, _POLY_BETA)


def sine() -> TestFunction:
    return TestFunction("sin", np.sin, np.cos, lambda x: -np.sin(x),
                        lambda x: -np.cos(x), 0.0)


def indicator(a: float = -0.3, b: float = 0.3) -> TestFunction:
    """``1_{(a, b]}``; no derivative."""
    a, b = float(a), float(b)
    if not a < b:
        raise DomainError("indicator needs a < b")
    return TestFunction(f"indicator({_fmt(a)},{_fmt(b)})",
                        lambda x: ((x > a) & (x <= b)).astype(float),
                        antideriv=lambda x: np.clip(x, a, b) - a,
                        beta=0.0, kinks=(a, b))


def step_up(a: float = 0.0) -> TestFunction:
    """``1_{y > a}``; no derivative."""
    a = float(a)
    return TestFunction(f"step_up({_fmt(a)})", lambda x: (x > a).astype(float),
                        antideriv=lambda x: np.maximum(x - a, 0.0), beta=0.0,
                        kinks=(a,))


def step_down(a: float = 0.0) -> TestFunction:
    """``1_{y < a}``; no derivative."""
    a = float(a)
    return TestFunction(f"step_down({_fmt(a)})", lambda x: (x < a).astype(float),
                        antideriv=lambda x: -np.maximum(a - x, 0.0), beta=0.0,
                        kinks=(a,))


def sign_shift(a: float = 0.0) -> TestFunction:
    """``sign(y - a)``; no derivative."""
    a = float(a)
    return TestFunction(f"sign({_fmt(a)})", lambda x: np.sign(x - a),
                        antideriv=lambda x: np.abs(x - a), beta=0.0, kinks=(a,))


def pos_part(a: float = 0.0) -> TestFunction:
    """``(y - a)^+`` with derivative ``1_{y > a}``."""
    a = float(a)
    return TestFunction(f"pos_part({_fmt(a)})", lambda x: np.maximum(x - a, 0.0),
                        lambda x: (x > a).astype(float), None,
                        lambda x: 0.5 * np.maximum(x - a, 0.0) ** 2,
                        _POLY_BETA, (a,))


def neg_part(a: float = 0.0) -> TestFunction:
    """``(y - a)^-`` with derivative ``-1_{y < a}``."""
    a = float(a)
    return TestFunction(f"neg_part({_fmt(a)})", lambda x: np.maximum(a - x, 0.0),
                        lambda x: -(x < a).astype(float), None,
                        lambda x: -0.5 * np.maximum(a - x, 0.0) ** 2,
                        _POLY_BETA, (a,))


def abs_shift(a: float = 0.0) -> TestFunction:
    """``|y - a|`` with derivative ``sign(y - a)``."""
    a = float(a)
    return TestFunction(f"abs({_fmt(a)})", lambda x: np.abs(x - a),
                        lambda x: np.sign(x - a), None,
                        lambda x: 0.5 * (x - a) * np.abs(x - a), _POLY_BETA, (a,))


def exp_square(beta: float = 0.1) -> TestFunction:
    """``exp(beta y^2)``, growth exponent exactly ``beta``."""
    b = float(beta)
    return TestFunction(f"exp_square({_fmt(b)})", lambda x: np.exp(b * x * x),
                        lambda x: 2.0 * b * x * np.exp(b * x * x),
                        lambda x: (2.0 * b + 4.0 * b * b * x * x) * np.exp(b * x * x),
                        None, b)


REGISTRY = {
    "constant": constant,
    "identity": identity,
    "square": square,
    "half_square": half_square,
    "cube": cube,
    "sin": sine,
    "indicator": indicator,
    "step_up": step_up,
    "step_down": step_down,
    "sign": sign_shift,
    "pos_part": pos_part,
    "neg_part": neg_part,
    "abs": abs_shift,
    "exp_square": exp_square,
}

_SPEC = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def get_function(spec) -> TestFunction:
    """Look up a registry entry by spec string, e.g. ``"indicator(-0.3,0.3)"``.

    A :class:`TestFunction` is returned unchanged.
    """
    if isinstance(spec, TestFunction):
        return spec
    m = _SPEC.match(str(spec))
    if not m or m.group(1) not in REGISTRY:
        raise DomainError(f"unknown test function {spec!r}; known: {sorted(REGISTRY)}")
    args, kwargs = [], {}
    if m.group(2) and m.group(2).strip():
        call = ast.parse(f"f({m.group(2)})", mode="eval").body
        try:
            args = [ast.literal_eval(a) for a in call.args]
            kwargs = {k.arg: ast.literal_eval(k.value) for k in call.keywords}
        except ValueError as exc:
            raise DomainError(f"bad arguments in {spec!r}") from exc
    return REGISTRY[m.group(1)](*args, **kwargs)


def check_function(f: TestFunction, probe=None, h: float = 1e-5, tol: float = 1e-6):
    """Check the registry invariants of ``f`` on a probe set.

    Returns
    -------
    dict
        ``deriv_ok``: central differences of ``eval`` match ``deriv`` (and of
        ``deriv`` match ``deriv2``) within ``tol (1 + |deriv|)`` away from
        kinks; ``growth_const``: ``max |f(z)| exp(-beta z^2)`` over the probe,
        finite when the declared growth holds there.
    """
    if probe is None:
        probe = np.linspace(-4.0, 4.0, 161) + 0.0137
    z = np.asarray(probe, dtype=float)
    if f.kinks:
        far = np.min(np.abs(z[:, None] - np.asarray(f.kinks)[None, :]), axis=1) > 10 * h
        z = z[far]
    out = {"deriv_ok": True, "deriv2_ok": True}
    for name, g, dg in (("deriv_ok", f.eval, f.deriv), ("deriv2_ok", f.deriv, f.deriv2)):
        if g is None or dg is None:
            continue
        fd = (g(z + h) - g(z - h)) / (2.0 * h)
        ref = dg(z)
        out[name] = bool(np.all(np.abs(fd - ref) <= tol * (1.0 + np.abs(ref))))
    with np.errstate(over="ignore"):
        out["growth_const"] = float(np.max(np.abs(f.eval(z)) * np.exp(-f.beta * z * z)))
    out["growth_ok"] = math.isfinite(out["growth_const"])
    return out
