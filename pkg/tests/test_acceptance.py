"""Acceptance suite: one shipped experiment config per criterion.

Each test runs the config through the harness, prints one
``CRITERION k: PASS|FAIL`` line with the recorded checks, and asserts that
every check passed. The lines are repeated in the terminal summary.
"""

import pytest

from heatqv.harness import load_config, run

pytestmark = pytest.mark.slow

CRITERIA = [
    (1, "c01_scaling_limits", "analytic scaling limits"),
    (2, "c02_joint_limit", "joint limit spread"),
    (3, "c03_sampler_covariance", "exact sampler covariance"),
    (4, "c04_fd_oracle", "finite-difference oracle"),
    (5, "c05_spatial_qv", "spatial quadratic variation"),
    (6, "c06_temporal_qv", "temporal quadratic variation"),
    (7, "c07_pqc_smooth", "covariation limit for smooth f"),
    (8, "c08_ito_residuals", "Ito residuals"),
    (9, "c09_bouleau_yor", "Bouleau-Yor identity and local-time mass"),
    (10, "c10_lemmas", "covariance inequality sweep"),
    (11, "c11_pqc_bound", "second-moment bound shape"),
]


def _line(k, title, rep):
    parts = [f"{c.id}={c.value:.6g}{'' if c.passed else ' (FAIL: ' + c.rule + ')'}"
             for c in rep.criteria]
    status = "PASS" if rep.passed else "FAIL"
    return f"CRITERION {k}: {status}  {title}  [{rep.timings['wall_seconds']:.1f}s]  " + "; ".join(parts)


@pytest.mark.parametrize("k,name,title", CRITERIA, ids=[c[1] for c in CRITERIA])
def test_criterion(k, name, title, tmp_path, capsys, acceptance_lines):
    rep = run(load_config(name, {"out_dir": str(tmp_path)}))
    line = _line(k, title, rep)
    acceptance_lines.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert rep.criteria, "no criteria recorded"
    assert rep.passed, line
