"""Command-line interface.

Exit status is 0 when every asserted criterion passes, 2 when at least one
fails and 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, HeatQVError
from .config import KINDS, load_config, shipped_configs
from .runner import run, summarize

# default shipped config per subcommand
DEFAULTS = {
    "sample": "c03_sampler_covariance",
    "qv": "c05_spatial_qv",
    "pqc": "c07_pqc_smooth",
    "ito": "c08_ito_residuals",
    "localtime": "c09_bouleau_yor",
    "lemmas": "c10_lemmas",
    "scaling": "c01_scaling_limits",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", help="config file or shipped config name")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--out-dir", help="output directory (default: from config, else ./out)")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("-n", type=int, dest="n", help="override the replicate count")


def build_parser():
    ap = _Parser(prog="heatqv", description="Quadratic covariation experiments for the "
                 "stochastic heat equation.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for k in KINDS:
        _common(sub.add_parser(k, help=f"run a '{k}' experiment"))
    rp = sub.add_parser("report", help="summarize reports; with --run, run every shipped config first")
    _common(rp)
    rp.add_argument("--run", action="store_true", help="run all shipped criterion configs")
    rp.add_argument("--list", action="store_true", help="list shipped configs and exit")
    return ap


def _overrides(a):
    return {"seed": a.seed, "out_dir": a.out_dir, "threads": a.threads, "n": a.n}


def _print_report(rep, out=None):
    out = out or sys.stdout
    for c in rep.criteria:
        out.write(f"{'PASS' if c.passed else 'FAIL'}  {rep.id}:{c.id}  value={c.value:.6g}  "
                  f"({c.rule})\n")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if a.command == "report":
            if a.list:
                for p in shipped_configs():
                    print(p.stem)
                return 0
            ov = _overrides(a)
            out_dir = a.out_dir or "out"
            ov["out_dir"] = out_dir
            if a.run:
                names = [a.config] if a.config else [str(p) for p in shipped_configs()]
                for name in names:
                    rep = run(load_config(name, ov))
                    _print_report(rep)
            summary = summarize(out_dir)
            with open(f"{out_dir}/summary.json", "w") as fp:
                json.dump(summary, fp, indent=2, sort_keys=True)
            n_fail = sum(not r["pass"] for r in summary["reports"])
            print(f"{len(summary['reports'])} reports, {n_fail} failing")
            return 0 if summary["pass"] else 2
        cfg = load_config(a.config or DEFAULTS[a.command], _overrides(a))
        if cfg.kind != a.command:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {a.command!r}")
        rep = run(cfg)
        _print_report(rep)
        print(f"wrote {rep.csv_path} and {rep.json_path}")
        return 0 if rep.passed else 2
    except (ConfigError, HeatQVError, ValueError) as exc:
        print(f"heatqv: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
