"""Experiment runner: one config in, CSV rows and a JSON report out.

Every pass/fail in a report is computed from numbers that are also
written to the CSV, and ``(config, seed)`` fixes every emitted number.
The only non-deterministic field is ``timings``.

Kinds and their ``[params]``
----------------------------
``scaling``    ``modes`` (space, time, joint), ``t``, ``x``, ``ks``
``lemmas``     ``lemmas``, ``scales``
``sample``     ``engine`` (exact, fd), ``check`` (covariance, moments), ``L``,
               ``pool_abs_x``, ``write``
``qv``         ``directions``, ``t``, ``x``, ``site``
``pqc``        ``directions``, ``functions``, ``check`` (gap, bound), ``t``, ``x``, ``site``
``ito``        ``directions``, ``functions``, ``classes``, ``t``, ``x``, ``site``
``localtime``  ``directions``, ``f``, ``profile``, ``bandwidth_exponent``, ``t``, ``x``, ``site``
"""

from __future__ import annotations

import csv
import json
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .. import __version__
from .. import kernels as K
from .. import lemmas as LM
from .. import localtime as LT
from .. import qcov as Q
from ..errors import ConfigError
from ..fd import fd_integrate
from ..functions import get_function
from ..sampler import Path, sample_field, slice_space, slice_time, stack_paths, write_sample
from .config import ExperimentConfig
from .stats import mc_aggregate, rate_fit, trend_violations

__all__ = ["Criterion", "RunReport", "run", "scaling_limit_check", "summarize"]


@dataclass
class Criterion:
    """One recorded check: ``pass`` is derived from ``value``, ``target`` and ``tolerance``."""

    id: str
    value: float
    target: float
    tolerance: float
    passed: bool
    rule: str = ""

    def as_dict(self):
        return {"id": self.id, "value": _num(self.value), "target": _num(self.target),
                "tolerance": _num(self.tolerance), "pass": bool(self.passed), "rule": self.rule}


@dataclass
class RunReport:
    """Outcome of :func:`run`."""

    id: str
    kind: str
    config_fingerprint: str
    seed: int
    criteria: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    interrupted: bool = False
    csv_path: str = ""
    json_path: str = ""

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    def as_dict(self, timings=True):
        d = {"id": self.id, "kind": self.kind, "config_fingerprint": self.config_fingerprint,
             "seed": self.seed, "pass": self.passed, "interrupted": self.interrupted,
             "criteria": [c.as_dict() for c in self.criteria], "data": _clean(self.data),
             "software": {"heatqv": __version__, "numpy": np.__version__,
                          "python": platform.python_version()}}
        if timings:
            d["timings"] = self.timings
        return d

    def to_json(self, timings=True) -> str:
        return json.dumps(self.as_dict(timings), indent=2, sort_keys=True)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else str(v)


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return _num(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    return o


def _band(cid, value, lo, hi, target=None):
    tgt = 0.5 * (lo + hi) if target is None else target
    return Criterion(cid, value, tgt, 0.5 * (hi - lo), lo <= value <= hi, f"{lo} <= value <= {hi}")


def _upper(cid, value, bound):
    return Criterion(cid, value, 0.0, bound, value <= bound, f"value <= {bound}")


def _lower(cid, value, bound):
    return Criterion(cid, value, bound, 0.0, value > bound, f"value > {bound}")


# ----------------------------------------------------------------------------
# scaling limits (no Monte Carlo)

def scaling_limit_check(kind: str, t: float = 1.0, x: float = 0.0, levels=(2.0 ** -8,),
                        quad: K.QuadratureConfig = K.DEFAULT_QUAD, ks=(0.5, 1.0, 2.0)) -> dict:
    """Analytic increment ratios along a schedule.

    ``space``: ``E (u(t, x + d) - u(t, x))^2 / d``, limit 1.
    ``time``:  ``E (u(t + e, x) - u(t, x))^2 / sqrt(e) / sqrt(2/pi)``, limit 1.
    ``joint``: ``E (u(t + k d^2, x + d) - u(t, x))^2 / (sqrt(k d^2) + d)`` for each
    ``k``; ``spread`` is ``(max - min) / min`` over ``k`` at the finest ``d``.
    """
    if not t > 0:
        raise ConfigError("scaling: t must be > 0")
    out = {"kind": kind, "levels": list(levels)}
    if kind == "space":
        out["ratio"] = [K.increment_second_moment(t, x + d, t, x, quad) / d for d in levels]
    elif kind == "time":
        c = math.sqrt(2.0 / math.pi)
        out["ratio"] = [K.increment_second_moment(t + e, x, t, x, quad) / math.sqrt(e) / c
                        for e in levels]
    elif kind == "joint":
        out["ks"] = list(ks)
        out["ratio"] = {k: [K.increment_second_moment(t + k * d * d, x + d, t, x, quad)
                            / (math.sqrt(k) * d + d) for d in levels] for k in ks}
        fin = [out["ratio"][k][-1] for k in ks]
        out["spread"] = (max(fin) - min(fin)) / min(fin)
    else:
        raise ConfigError(f"scaling: unknown mode {kind!r}")
    return out


def _run_scaling(cfg, rep, rows):
    t, x = cfg.number("t", 1.0), cfg.number("x", 0.0)
    rows.append(("mode", "k", "level", "ratio"))
    for mode in cfg.words("modes", "space,time,joint"):
        levels = cfg.levels(mode)
        res = scaling_limit_check(mode, t, x, levels, ks=cfg.numbers("ks", (0.5, 1.0, 2.0)))
        rep.data[mode] = res
        if mode == "joint":
            for k, rs in res["ratio"].items():
                rows += [(mode, k, lv, r) for lv, r in zip(levels, rs)]
            rep.criteria.append(_lower("joint.spread", res["spread"],
                                       cfg.criterion("min_spread", 0.05)))
        else:
            rows += [(mode, "", lv, r) for lv, r in zip(levels, res["ratio"])]
            rep.criteria.append(_band(f"{mode}.ratio", res["ratio"][-1],
                                      cfg.criterion("ratio_low", 0.99),
                                      cfg.criterion("ratio_high", 1.01), 1.0))


# ----------------------------------------------------------------------------
# lemma sweeps

_EXPLICIT = ("2.3", "2.5", "2.6")


def _run_lemmas(cfg, rep, rows):
    rows.append(("lemma", "scale", "sup_ratio", "inf_ratio", "pass_rate", "stable"))
    scales = cfg.numbers("scales", (1e-2, 1e-1, 1.0, 10.0))
    for which in cfg.words("lemmas", ",".join(LM.LEMMAS)):
        res = LM.lemma_sweep(which, cfg.n, cfg.seed, tuple(scales))
        rep.data[which] = {"pass_rate": res.pass_rate, "stability": res.stability,
                           "stable": res.stable, "max_ratio": res.max_ratio,
                           "n_draws": res.n_draws, "n_rejected": res.n_rejected,
                           "sup_ratio": res.sup_ratio, "inf_ratio": res.inf_ratio}
        for c in scales:
            rows.append((which, c, res.sup_ratio.get(c, math.nan), res.inf_ratio.get(c, math.nan),
                         res.pass_rate, res.stable))
        if which in _EXPLICIT:
            rep.criteria.append(Criterion(f"{which}.pass_rate", res.pass_rate, 1.0, 0.0,
                                          res.pass_rate == 1.0, "pass_rate == 1"))
        else:
            rep.criteria.append(Criterion(f"{which}.stability", res.stability, 1.0, 0.5,
                                          res.stable, "per-scale extrema within 50% of median"))


# ----------------------------------------------------------------------------
# sampler fidelity

def _run_sample(cfg, rep, rows):
    engine = cfg.param("engine", "exact")
    check = cfg.param("check", "covariance")
    grid = cfg.grid()
    if engine == "exact":
        smp = sample_field(grid, cfg.n, cfg.seed, threads=cfg.threads)
    elif engine == "fd":
        smp = fd_integrate(grid, cfg.n, cfg.seed, L=cfg.number("L", 8.0))
    else:
        raise ConfigError(f"params.engine: unknown engine {engine!r}")
    if cfg.param("write", "false").lower() == "true":
        d = FsPath(cfg.out_dir) / f"{cfg.id}_samples"
        d.mkdir(parents=True, exist_ok=True)
        for s in smp:
            with open(d / f"replicate_{s.replicate:06d}.bin", "wb") as fp:
                write_sample(fp, s)
    V = np.stack([s.values for s in smp])  # (n, nt, nx)
    tt, xx = np.meshgrid(grid.times, grid.spaces, indexing="ij")
    if check == "covariance":
        X = V.reshape(cfg.n, -1)
        pts = list(zip(tt.ravel(), xx.ravel()))
        rows.append(("i", "j", "t_i", "x_i", "t_j", "x_j", "empirical", "exact", "se", "z"))
        zmax = 0.0
        for i in range(len(pts)):
            for j in range(i + 1):
                prod = X[:, i] * X[:, j]
                agg = mc_aggregate(prod)
                ex = K.cov_spacetime(K.CovQuery(pts[i][0], pts[j][0], pts[i][1], pts[j][1]))
                z = abs(agg.mean - ex) / agg.se if agg.se > 0 else (0.0 if agg.mean == ex else math.inf)
                zmax = max(zmax, z)
                rows.append((i, j, *pts[i], *pts[j], agg.mean, ex, agg.se, z))
        rep.data["max_z"] = zmax
        rep.criteria.append(_upper("covariance.max_z", zmax, cfg.criterion("max_z", 5.0)))
    elif check == "moments":
        t_hi, t_mid = cfg.number("t", 1.0), cfg.number("s", 0.5)
        it = int(np.argmin(np.abs(grid.times - t_hi)))
        js = int(np.argmin(np.abs(grid.times - t_mid)))
        keep = np.abs(grid.spaces) <= cfg.number("pool_abs_x", 4.0)
        a, b = V[:, it, keep], V[:, js, keep]
        # sites are pooled: the field is stationary in x away from the boundary
        var = mc_aggregate((a * a).mean(axis=1))
        cov = mc_aggregate((a * b).mean(axis=1))
        tv, tc = float(K.variance(t_hi)), float(K.cov_time(t_hi, t_mid))
        rows.append(("quantity", "estimate", "target", "se", "rel_error"))
        rows.append(("variance", var.mean, tv, var.se, var.mean / tv - 1))
        rows.append(("cov_time", cov.mean, tc, cov.se, cov.mean / tc - 1))
        tol = cfg.criterion("tol_rel", 0.05)
        for name, agg, tgt in (("variance", var, tv), ("cov_time", cov, tc)):
            rel = abs(agg.mean / tgt - 1)
            rep.criteria.append(Criterion(f"{name}.rel_error", rel, 0.0, tol, rel <= tol,
                                          f"|estimate/target - 1| <= {tol}"))
        rep.data.update(variance=var.as_dict(), cov_time=cov.as_dict())
    else:
        raise ConfigError(f"params.check: unknown check {check!r}")


# ----------------------------------------------------------------------------
# path-based experiments

def _paths(cfg, direction) -> tuple:
    """Replicate batch of space or time paths and the endpoint ``at``."""
    grid = cfg.grid(direction)
    smp = sample_field(grid, cfg.n, cfg.seed, threads=cfg.threads)
    if direction == "space":
        t = cfg.number("t", 1.0, direction=direction)
        i = int(np.argmin(np.abs(grid.times - t)))
        p = stack_paths([slice_space(s, i) for s in smp])
        return p, cfg.number("x", 1.0, direction=direction)
    if direction == "time":
        site = cfg.number("site", 0.0, direction=direction)
        j = int(np.argmin(np.abs(grid.spaces - site)))
        p = stack_paths([slice_time(s, j) for s in smp])
        return p, cfg.number("t", 1.0, direction=direction)
    raise ConfigError(f"params.directions: unknown direction {direction!r}")


def _estimator_rows(rows, out: Q.EstimatorOutput, seed):
    out.seeds = np.full(out.values.shape[0], seed, dtype=np.int64)
    rows.extend(out.rows())


_EST_HEADER = ("kind", "f_id", "level", "value", "reference", "gap", "seed", "replicate")


def _run_qv(cfg, rep, rows):
    rows.append(_EST_HEADER)
    for d in cfg.words("directions", "space"):
        p, at = _paths(cfg, d)
        sch = Q.EpsilonSchedule(cfg.levels(d), "spatial" if d == "space" else "temporal")
        out = Q.estimate_schedule("spatial_qv" if d == "space" else "temporal_qv", p, None, at, sch)
        _estimator_rows(rows, out, cfg.seed)
        target = float(out.reference[0])
        aggs = [mc_aggregate(out.values[:, j]) for j in range(len(sch))]
        gaps = out.gaps.mean(axis=0)
        # the rate is only defined on three or more levels
        fit = rate_fit(sch.levels, gaps) if len(sch) >= 3 else None
        rep.data[d] = {"levels": sch.levels, "target": target,
                       "mean": [a.mean for a in aggs], "se": [a.se for a in aggs],
                       "mean_abs_gap": gaps, "rate": fit.as_dict() if fit else None}
        rep.criteria.append(_band(f"{d}.mean_over_target", aggs[-1].mean / target,
                                  cfg.criterion("ratio_low", direction=d),
                                  cfg.criterion("ratio_high", direction=d), 1.0))
        if fit is None:
            continue
        if cfg.has_criterion("min_alpha", d):
            rep.criteria.append(_lower(f"{d}.rate_alpha", fit.alpha, cfg.criterion("min_alpha", direction=d)))
        if cfg.has_criterion("min_r2", d):
            r2 = fit.r2
            rep.criteria.append(Criterion(f"{d}.rate_r2", r2, 1.0, 1.0 - cfg.criterion("min_r2", direction=d),
                                          r2 >= cfg.criterion("min_r2", direction=d),
                                          f"value >= {cfg.criterion('min_r2', direction=d)}"))


def pqc_bound_ratios(p: Path, functions, x: float, delta: float) -> dict:
    """Second moment of the spatial PQC over ``||f||^2_{H_t}`` per function."""
    out = {}
    for spec in functions:
        f = get_function(spec)
        m2 = float(np.mean(np.asarray(Q.spatial_pqc(p, f, x, delta)) ** 2))
        nr = Q.norm_Ht(f, p.fixed if math.isfinite(p.fixed) else 1.0, x)
        out[f.id] = {"second_moment": m2, "norm2": nr.norm2, "infinite": nr.infinite,
                     "ratio": m2 / nr.norm2 if (not nr.infinite and nr.norm2 > 0) else math.nan}
    return out


def _run_pqc(cfg, rep, rows):
    check = cfg.param("check", "gap")
    funcs = cfg.words("functions", "sin,square")
    if check == "bound":
        rows.append(("f_id", "second_moment", "norm2", "ratio", "infinite"))
        p, x = _paths(cfg, "space")
        delta = cfg.levels("space")[-1]
        res = pqc_bound_ratios(p, funcs, x, delta)
        ratios = np.array([r["ratio"] for r in res.values()])
        pos = ratios[np.isfinite(ratios) & (ratios > 0)]
        Kfit = float(np.median(pos)) if pos.size else math.nan
        worst = float(np.nanmax(ratios / Kfit)) if pos.size else math.nan
        for fid, r in res.items():
            rows.append((fid, r["second_moment"], r["norm2"], r["ratio"], r["infinite"]))
        rep.data.update(functions=res, K=Kfit, worst_over_K=worst)
        fac = cfg.criterion("max_over_K", 3.0)
        rep.criteria.append(Criterion("bound.worst_over_K", worst, 1.0, fac, worst <= fac,
                                      f"max ratio / K <= {fac}"))
        return
    if check != "gap":
        raise ConfigError(f"params.check: unknown check {check!r}")
    rows.append(_EST_HEADER)
    for d in cfg.words("directions", "space"):
        p, at = _paths(cfg, d)
        sch = Q.EpsilonSchedule(cfg.levels(d), "spatial" if d == "space" else "temporal")
        kind = "spatial_pqc" if d == "space" else "temporal_pqc"
        for spec in funcs:
            out = Q.estimate_schedule(kind, p, spec, at, sch)
            _estimator_rows(rows, out, cfg.seed)
            rel = out.gaps.sum(axis=0) / np.abs(out.reference).sum()
            rep.data[f"{d}.{out.f_id}"] = {"levels": sch.levels, "relative_gap": rel,
                                           "violations": trend_violations(rel)}
            rep.criteria.append(_upper(f"{d}.{out.f_id}.relative_gap", float(rel[-1]),
                                       cfg.criterion("max_rel_gap", direction=d)))


def _run_ito(cfg, rep, rows):
    rows.append(_EST_HEADER)
    funcs = cfg.words("functions", "half_square")
    classes = cfg.words("classes", ",".join(["quadratic"] * len(funcs)))
    if len(classes) != len(funcs):
        raise ConfigError("params.classes must name one class per function")
    max_viol = int(cfg.criterion("max_violations", 1))
    for d in cfg.words("directions", "space"):
        p, at = _paths(cfg, d)
        levels = cfg.levels(d)
        Q.EpsilonSchedule(levels).check_resolution(p.step)
        for spec, cls in zip(funcs, classes):
            F = get_function(spec)
            if d == "space":
                vals = np.column_stack([Q.ito_residual_space(F, p, at, lv) for lv in levels])
            else:
                vals = np.column_stack([Q.ito_residual_time(F, p, at, lv) for lv in levels])
            out = Q.EstimatorOutput(f"ito_residual_{d}", F.id, np.array(levels), vals,
                                    np.zeros(vals.shape[0]))
            _estimator_rows(rows, out, cfg.seed)
            m = np.abs(vals).mean(axis=0)
            viol = trend_violations(m)
            rep.data[f"{d}.{F.id}"] = {"levels": levels, "mean_abs_residual": m, "violations": viol}
            rep.criteria.append(_upper(f"{d}.{F.id}.mean_abs_residual", float(m[-1]),
                                       cfg.criterion(f"tol_{cls}")))
            rep.criteria.append(Criterion(f"{d}.{F.id}.trend_violations", viol, 0, max_viol,
                                          viol <= max_viol, f"increases <= {max_viol}"))


def _run_localtime(cfg, rep, rows):
    rows.append(("check", "direction", "replicate", "value", "target"))
    f = get_function(cfg.param("f", "indicator(-0.3,0.3)"))
    profile = cfg.param("profile", "bump")
    tol_mass = cfg.criterion("tol_mass", 0.01)
    lt_rows = []
    for d in cfg.words("directions", "space"):
        p, at = _paths(cfg, d)
        level = cfg.levels(d)[-1]
        h = LT.bandwidth_for(level, cfg.number("bandwidth_exponent", 0.5 if d == "space" else 0.25,
                                               direction=d))
        mol = LT.Mollifier.from_bandwidth(h, profile)
        target = abs(at) if d == "space" else math.sqrt(at / math.pi)
        masses, by = [], []
        for k in range(p.values.shape[0]):
            pk = Path(p.coords, p.values[k], p.kind, p.fixed)
            est = LT.local_time_profile(pk, at, mol, seed=cfg.seed)
            masses.append(est.total())
            rows.append(("mass", d, k, est.total(), target))
            if k == 0:
                lt_rows += list(est.rows())
            if d == "space" and cfg.has_criterion("tol_by"):
                r = LT.bouleau_yor_residual(f, pk, at, level, mol)
                by.append(r)
                rows.append(("bouleau_yor", d, k, r, 0.0))
        rel = np.abs(np.asarray(masses) / target - 1.0)
        rep.data[f"{d}.mass"] = {"target": target, "bandwidth": h, "max_rel_error": rel.max()}
        rep.criteria.append(_upper(f"{d}.mass.max_rel_error", float(rel.max()), tol_mass))
        if by:
            m = float(np.mean(np.abs(by)))
            rep.data["bouleau_yor"] = {"f": f.id, "level": level, "bandwidth": h,
                                       "mean_abs_residual": m,
                                       "se": mc_aggregate(np.abs(by)).se}
            rep.criteria.append(_upper("space.bouleau_yor.mean_abs_residual", m,
                                       cfg.criterion("tol_by")))
    rep.data["_localtime_rows"] = lt_rows


_RUNNERS = {"scaling": _run_scaling, "lemmas": _run_lemmas, "sample": _run_sample,
            "qv": _run_qv, "pqc": _run_pqc, "ito": _run_ito, "localtime": _run_localtime}


def _write_csv(path: FsPath, rows):
    with open(path, "w", newline="") as fp:
        w = csv.writer(fp)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def run(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Run one experiment and (optionally) write ``<id>.csv`` and ``<id>.json``.

    On ``KeyboardInterrupt`` the rows gathered so far and a report marked
    ``interrupted`` are written before the exception propagates.
    """
    rep = RunReport(cfg.id, cfg.kind, cfg.fingerprint(), cfg.seed)
    rows: list = []
    t0 = time.perf_counter()
    try:
        _RUNNERS[cfg.kind](cfg, rep, rows)
    except KeyboardInterrupt:
        rep.interrupted = True
        raise
    finally:
        rep.timings = {"wall_seconds": time.perf_counter() - t0,
                       "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
        lt_rows = rep.data.pop("_localtime_rows", None)
        if write:
            out = FsPath(cfg.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            rep.csv_path = str(out / f"{cfg.id}.csv")
            rep.json_path = str(out / f"{cfg.id}.json")
            _write_csv(FsPath(rep.csv_path), rows)
            if lt_rows:
                _write_csv(out / f"{cfg.id}_localtime.csv",
                           [("a", "mass", "bandwidth", "weight_kind", "seed")] + lt_rows)
            FsPath(rep.json_path).write_text(rep.to_json() + "\n")
    return rep


def summarize(out_dir) -> dict:
    """Collect the criteria of every report in ``out_dir``."""
    res = {"reports": [], "pass": True}
    for p in sorted(FsPath(out_dir).glob("*.json")):
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if "criteria" not in d or "config_fingerprint" not in d:
            continue
        res["reports"].append({"id": d["id"], "pass": d["pass"], "criteria": d["criteria"]})
        res["pass"] &= bool(d["pass"])
    return res
