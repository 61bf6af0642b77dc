"""Experiment configuration: flat ``key = value`` INI files with sections.

Sections
--------
``[experiment]``  ``kind``, ``id``, ``n``, ``seed``, ``threads``, ``out_dir``
``[grid]``        ``times`` or ``t_max`` + ``dt``; ``spaces`` or ``x_min``,
                  ``x_max`` + ``dx``; optional ``max_points``. A section
                  ``[grid.space]`` or ``[grid.time]`` overrides ``[grid]`` for
                  that direction.
``[schedule]``    ``levels`` as ``dyadic:4:9`` (``2^-4 .. 2^-9``) or a comma list
``[params]``      kind-specific settings (see :mod:`heatqv.harness.runner`)
``[criteria]``    thresholds, e.g. ``band_low = 0.95``
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from ..errors import ConfigError
from ..sampler import FieldGrid

__all__ = ["KINDS", "ExperimentConfig", "load_config", "parse_config", "shipped_configs",
           "parse_levels", "parse_grid"]

KINDS = ("sample", "qv", "pqc", "ito", "localtime", "lemmas", "scaling")
CONFIG_DIR = FsPath(__file__).parent / "configs"


def _floats(text: str):
    return [float(eval_number(v)) for v in text.replace(";", ",").split(",") if v.strip()]


def eval_number(text: str) -> float:
    """Parse ``0.5``, ``2^-9``, ``1/128`` or ``pi/4``."""
    s = text.strip().replace(" ", "")
    try:
        return float(s)
    except ValueError:
        pass
    if "^" in s:
        b, e = s.split("^", 1)
        return eval_number(b) ** eval_number(e)
    if "/" in s:
        a, b = s.split("/", 1)
        return eval_number(a) / eval_number(b)
    if s == "pi":
        return math.pi
    if s.startswith("-"):
        return -eval_number(s[1:])
    raise ConfigError(f"cannot parse number {text!r}")


def parse_levels(text: str) -> tuple:
    """``dyadic:a:b`` -> ``(2^-a, ..., 2^-b)``; otherwise a comma list."""
    s = text.strip()
    if s.startswith("dyadic:"):
        try:
            _, a, b = s.split(":")
            a, b = int(a), int(b)
        except ValueError as exc:
            raise ConfigError(f"schedule.levels: bad dyadic spec {text!r}") from exc
        if b < a:
            raise ConfigError("schedule.levels: dyadic:a:b needs a <= b")
        return tuple(2.0 ** -k for k in range(a, b + 1))
    return tuple(_floats(s))


def _axis(sec, name, lo_key, hi_key, step_key, lo_default=0.0):
    if name in sec:
        return np.asarray(_floats(sec[name]))
    if hi_key not in sec or step_key not in sec:
        raise ConfigError(f"grid: give '{name}' or '{hi_key}' and '{step_key}'")
    lo = eval_number(sec.get(lo_key, str(lo_default)))
    hi, step = eval_number(sec[hi_key]), eval_number(sec[step_key])
    if not step > 0:
        raise ConfigError(f"grid.{step_key} must be > 0")
    m = int(round((hi - lo) / step))
    if m < 0 or abs(lo + m * step - hi) > 1e-9 * max(1.0, abs(hi)):
        raise ConfigError(f"grid: {hi_key} - {lo_key} must be a multiple of {step_key}")
    return lo + step * np.arange(m + 1)


def parse_grid(sec) -> FieldGrid:
    """Build a :class:`FieldGrid` from a config section."""
    times = _axis(sec, "times", "t_min", "t_max", "dt")
    spaces = _axis(sec, "spaces", "x_min", "x_max", "dx")
    kw = {}
    if "dt" in sec:
        kw["dt"] = eval_number(sec["dt"])
    if "dx" in sec:
        kw["dx"] = eval_number(sec["dx"])
    kw["max_points"] = int(sec.get("max_points", "8192"))
    try:
        return FieldGrid(times, spaces, **kw)
    except Exception as exc:
        raise ConfigError(f"grid: {exc}") from exc


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Attributes
    ----------
    kind : str
        One of :data:`KINDS`.
    id : str
        Criterion or run identifier used for output file names.
    n : int
        Replicate count (or draw count for ``lemmas``).
    seed : int
    threads : int
    out_dir : str
    sections : dict
        Raw ``{section: {key: value}}`` text, used for the fingerprint and
        for kind-specific parameters.
    """

    kind: str
    id: str
    n: int = 1
    seed: int = 0
    threads: int = 1
    out_dir: str = "out"
    sections: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"experiment.kind: {self.kind!r} is not one of {KINDS}")
        if self.n < 1:
            raise ConfigError("experiment.n must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("experiment.seed must be a 64-bit unsigned integer")
        if self.threads < 1:
            raise ConfigError("experiment.threads must be >= 1")
        for k, v in self.sections.get("criteria", {}).items():
            if k.startswith("tol") and not eval_number(v) > 0:
                raise ConfigError(f"criteria.{k} must be > 0")
        for key, text in self.sections.get("schedule", {}).items():
            if key.split(".")[0] != "levels":
                continue
            lv = parse_levels(text)
            if not lv or any(v <= 0 for v in lv) or any(b >= a for a, b in zip(lv, lv[1:])):
                raise ConfigError(f"schedule.{key} must be positive and strictly decreasing")

    # accessors -------------------------------------------------------------
    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def param(self, key, default=None, section="params", direction=None):
        sec = self.sections.get(section, {})
        if direction and f"{key}.{direction}" in sec:
            return sec[f"{key}.{direction}"]
        return sec.get(key, default)

    def number(self, key, default=None, section="params", direction=None) -> float:
        v = self.param(key, None, section, direction)
        if v is None:
            if default is None:
                raise ConfigError(f"{section}.{key} is required")
            return float(default)
        return eval_number(v)

    def numbers(self, key, default=None, section="params") -> list:
        v = self.param(key, None, section)
        if v is None:
            if default is None:
                raise ConfigError(f"{section}.{key} is required")
            return list(default)
        return _floats(v)

    def words(self, key, default="", section="params") -> list:
        v = self.param(key, default, section)
        return [w.strip() for w in split_top(v) if w.strip()]

    def criterion(self, key, default=None, direction=None) -> float:
        return self.number(key, default, "criteria", direction)

    def has_criterion(self, key, direction=None) -> bool:
        return self.param(key, None, "criteria", direction) is not None

    def levels(self, direction: str | None = None) -> tuple:
        sec = self.section("schedule")
        text = sec.get(f"levels.{direction}") if direction else None
        text = text or sec.get("levels")
        if not text:
            raise ConfigError(f"schedule.levels{'.' + direction if direction else ''} is required")
        return parse_levels(text)

    def grid(self, direction: str | None = None) -> FieldGrid:
        name = f"grid.{direction}" if direction else "grid"
        sec = self.sections.get(name) or self.sections.get("grid")
        if not sec:
            raise ConfigError(f"missing [{name}] section")
        return parse_grid(sec)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical config text (sections and keys sorted)."""
        lines = [f"kind={self.kind}", f"id={self.id}", f"n={self.n}", f"seed={self.seed}"]
        for s in sorted(self.sections):
            if s == "experiment":
                continue
            for k in sorted(self.sections[s]):
                lines.append(f"[{s}]{k}={self.sections[s][k]}")
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def split_top(text: str):
    """Split on commas that are not inside parentheses."""
    out, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    out.append("".join(cur))
    return out


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse INI text; ``overrides`` replaces ``[experiment]`` keys."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    sections = {s: dict(cp[s]) for s in cp.sections()}
    exp = dict(sections.get("experiment", {}))
    for k, v in (overrides or {}).items():
        if v is not None:
            exp[k] = str(v)
    sections["experiment"] = exp
    if "kind" not in exp:
        raise ConfigError("experiment.kind is required")

    def as_int(key, default):
        try:
            return int(exp.get(key, default))
        except ValueError as exc:
            raise ConfigError(f"experiment.{key} must be an integer") from exc

    return ExperimentConfig(
        kind=exp["kind"].strip(), id=exp.get("id", exp["kind"]).strip(),
        n=as_int("n", 1), seed=as_int("seed", 0), threads=as_int("threads", 1),
        out_dir=exp.get("out_dir", "out"), sections=sections)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (a shipped config name such as ``c05_spatial_qv`` also works)."""
    p = FsPath(path)
    if not p.exists():
        q = CONFIG_DIR / (p.name if p.suffix == ".ini" else p.name + ".ini")
        if not q.exists():
            raise ConfigError(f"config file {path} not found")
        p = q
    return parse_config(p.read_text(), overrides)


def shipped_configs() -> list:
    """Paths of the shipped criterion configs, in order."""
    return sorted(CONFIG_DIR.glob("*.ini"))
