import csv
import json
import math

import numpy as np
import pytest

from heatqv.errors import ConfigError, DomainError
from heatqv.harness import cli, config, runner, stats

QV_SMALL = """
[experiment]
kind = qv
id = small_qv
n = 20
seed = 4

[params]
directions = space
t = 1
x = 1

[grid]
times = 1
x_min = 0
x_max = 1.125
dx = 2^-8

[schedule]
levels = dyadic:3:6

[criteria]
ratio_low = 0.8
ratio_high = 1.2
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- stats

def test_mc_aggregate_examples():
    a = stats.mc_aggregate([0.0, 2.0])
    assert (a.mean, a.se) == (1.0, 1.0)
    assert a.ci_low == pytest.approx(1 - 1.96) and a.ci_high == pytest.approx(1 + 1.96)
    assert stats.mc_aggregate([3.0] * 7).se == 0.0
    one = stats.mc_aggregate([5.0])
    assert one.mean == 5.0 and not one.se_available and math.isnan(one.se)
    x = np.random.default_rng(123).standard_normal(10_000)
    assert abs(stats.mc_aggregate(x).mean) <= 0.05
    with pytest.raises(DomainError):
        stats.mc_aggregate([])


def test_rate_fit_examples():
    lv = 2.0 ** -np.arange(3, 9)
    f = stats.rate_fit(lv, lv)
    assert f.alpha == pytest.approx(1.0) and f.r2 == pytest.approx(1.0)
    assert stats.rate_fit(lv, lv ** 2).alpha == pytest.approx(2.0)
    fl = stats.rate_fit(lv, np.r_[lv[:-1], 0.0])
    assert fl.floored
    with pytest.raises(DomainError):
        stats.rate_fit(lv[:2], lv[:2])


def test_trend_violations():
    assert stats.trend_violations([3, 2, 1]) == 0
    assert stats.trend_violations([3, 4, 1, 2]) == 2


# ---------------------------------------------------------------- config

def test_numbers_and_levels():
    assert config.eval_number("2^-9") == 2.0 ** -9
    assert config.eval_number("1/128") == 1 / 128
    assert config.eval_number("pi") == math.pi
    assert config.parse_levels("dyadic:4:6") == (2.0 ** -4, 2.0 ** -5, 2.0 ** -6)
    assert config.parse_levels("0.5, 0.25") == (0.5, 0.25)


@pytest.mark.parametrize("bad", [
    QV_SMALL.replace("kind = qv", "kind = nope"),
    QV_SMALL.replace("n = 20", "n = 0"),
    QV_SMALL.replace("n = 20", "n = many"),
    QV_SMALL.replace("levels = dyadic:3:6", "levels = 0.1, 0.2"),
    QV_SMALL.replace("[criteria]", "[criteria]\ntol_x = -1"),
    "[experiment\nkind = qv",
    "[experiment]\nid = x",
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        config.parse_config(bad)


def test_shipped_configs_parse():
    names = [p.stem for p in config.shipped_configs()]
    assert len(names) == 11
    for n in names:
        cfg = config.load_config(n)
        assert cfg.id == n
    with pytest.raises(ConfigError):
        config.load_config("does_not_exist")


def test_fingerprint_tracks_content():
    a = config.parse_config(QV_SMALL)
    b = config.parse_config(QV_SMALL, {"seed": 5})
    assert a.fingerprint() == config.parse_config(QV_SMALL).fingerprint()
    assert a.fingerprint() != b.fingerprint()


# ---------------------------------------------------------------- runner

def test_qv_single_level_single_row(tmp_path):
    text = QV_SMALL.replace("levels = dyadic:3:6", "levels = 2^-6")
    cfg = config.parse_config(text, {"n": 1, "out_dir": str(tmp_path)})
    rep = runner.run(cfg)
    rows = list(csv.reader(open(rep.csv_path)))
    assert rows[0] == list(runner._EST_HEADER)
    assert len(rows) == 2
    assert rows[1][0] == "spatial_qv" and float(rows[1][2]) == 2.0 ** -6


def test_run_deterministic_modulo_timings(tmp_path):
    cfg = config.parse_config(QV_SMALL, {"out_dir": str(tmp_path / "a")})
    r1 = runner.run(cfg)
    r2 = runner.run(config.parse_config(QV_SMALL, {"out_dir": str(tmp_path / "b")}))
    d1 = json.loads(open(r1.json_path).read())
    d2 = json.loads(open(r2.json_path).read())
    assert set(d1["timings"]) == {"wall_seconds", "timestamp"}
    d1.pop("timings"), d2.pop("timings")
    assert d1 == d2
    assert r1.to_json(timings=False) == r2.to_json(timings=False)
    assert open(r1.csv_path).read() == open(r2.csv_path).read()
    for c in d1["criteria"]:
        assert set(c) >= {"id", "value", "target", "tolerance", "pass"}


def test_threads_do_not_change_output(tmp_path):
    a = runner.run(config.parse_config(QV_SMALL, {"out_dir": str(tmp_path / "a")}))
    b = runner.run(config.parse_config(QV_SMALL, {"out_dir": str(tmp_path / "b"), "threads": 4}))
    assert open(a.csv_path).read() == open(b.csv_path).read()


def test_criteria_recomputable_from_csv(tmp_path):
    rep = runner.run(config.parse_config(QV_SMALL, {"out_dir": str(tmp_path)}))
    rows = list(csv.DictReader(open(rep.csv_path)))
    fine = [float(r["value"]) for r in rows if float(r["level"]) == 2.0 ** -6]
    crit = {c.id: c for c in rep.criteria}["space.mean_over_target"]
    assert crit.value == pytest.approx(np.mean(fine) / 1.0, rel=1e-12)


def test_interrupt_flushes_partial_output(tmp_path, monkeypatch):
    def boom(cfg, rep, rows):
        rows.append(("kind", "value"))
        rows.append(("partial", 1.0))
        raise KeyboardInterrupt

    monkeypatch.setitem(runner._RUNNERS, "qv", boom)
    cfg = config.parse_config(QV_SMALL, {"out_dir": str(tmp_path)})
    with pytest.raises(KeyboardInterrupt):
        runner.run(cfg)
    assert (tmp_path / "small_qv.csv").read_text().splitlines()[1] == "partial,1.0"
    assert json.loads((tmp_path / "small_qv.json").read_text())["interrupted"] is True


def test_scaling_limit_check():
    r = runner.scaling_limit_check("space", levels=(2.0 ** -8,))
    assert 0.99 <= r["ratio"][-1] <= 1.01
    r = runner.scaling_limit_check("time", levels=(2.0 ** -12,))
    assert 0.99 <= r["ratio"][-1] <= 1.01
    r = runner.scaling_limit_check("joint", levels=(2.0 ** -6,), ks=(0.5, 2.0))
    assert r["spread"] > 0.05


# ---------------------------------------------------------------- CLI

def test_cli_exit_codes(tmp_path, capsys):
    ok = write(tmp_path, QV_SMALL)
    assert cli.main(["qv", "--config", str(ok), "--out-dir", str(tmp_path / "o")]) == 0
    failing = write(tmp_path, QV_SMALL.replace("ratio_low = 0.8", "ratio_low = 1.5")
                    .replace("ratio_high = 1.2", "ratio_high = 2"), "f.ini")
    assert cli.main(["qv", "--config", str(failing), "--out-dir", str(tmp_path / "o")]) == 2
    assert cli.main(["qv", "--config", str(tmp_path / "missing.ini")]) == 1
    assert cli.main(["lemmas", "--config", str(ok)]) == 1  # kind mismatch
    assert cli.main(["bogus"]) == 1
    assert cli.main(["qv", "--seed", "x"]) == 1
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" in out


def test_cli_report(tmp_path, capsys):
    ok = write(tmp_path, QV_SMALL)
    out = tmp_path / "o"
    assert cli.main(["report", "--run", "--config", str(ok), "--out-dir", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["pass"] and s["reports"][0]["id"] == "small_qv"
    assert cli.main(["report", "--list"]) == 0
    assert "c05_spatial_qv" in capsys.readouterr().out


def test_cli_scaling_default(tmp_path):
    assert cli.main(["scaling", "--out-dir", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "c01_scaling_limits.json").read_text())
    assert d["pass"] and len(d["config_fingerprint"]) == 64
