import math
import warnings

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from heatqv import localtime as LT
from heatqv import qcov as Q
from heatqv.errors import ConfigError, DomainError
from heatqv.harness.stats import trend_violations
from heatqv.sampler import Path

SD = 0.39763505411847


def one(paths, k):
    return Path(paths.coords, paths.values[k], paths.kind)


def trap(v, h):
    return h * (v.sum() - 0.5 * (v[0] + v[-1]))


# ---------------------------------------------------------------- mollifier

def test_bump_normalizer_oracle():
    mp.mp.dps = 25
    val = mp.quad(lambda x: mp.e ** (1 / ((x - 1) ** 2 - 1)), [0, 1, 2])
    assert LT.BUMP_NORMALIZER == pytest.approx(float(1 / val), rel=1e-14)


@pytest.mark.parametrize("profile", ["bump", "gaussian"])
@pytest.mark.parametrize("n", [1.0, 7.5, 40.0])
def test_kernel_mass_and_moments(profile, n):
    m = LT.Mollifier(n, profile)
    lim = m.support
    mass = integrate.quad(m.kernel, -lim, lim, points=[0.0], limit=200)[0]
    var = integrate.quad(lambda u: u * u * m.kernel(u), -lim, lim, limit=200)[0]
    assert mass == pytest.approx(1.0, abs=1e-9)
    assert math.sqrt(var) == pytest.approx(SD / n, rel=1e-6)


@given(st.floats(0.5, 50), st.floats(-3, 3))
def test_bump_support_and_sign(n, x):
    m = LT.Mollifier(n)
    z = m.zeta_n(x)
    assert z >= 0
    if not 0 < x < 2 / n:
        assert z == 0
    assert m.kernel(x) == pytest.approx(m.kernel(-x))


def test_mollifier_validation():
    with pytest.raises(DomainError):
        LT.Mollifier(0.0)
    with pytest.raises(DomainError):
        LT.Mollifier(2.0, "box")
    assert LT.Mollifier.from_bandwidth(0.25).n == 4.0
    assert LT.bandwidth_for(2.0 ** -8, 0.5) == 2.0 ** -4


# ---------------------------------------------------------------- occupation

def test_occupation_examples():
    h = 2.0 ** -8
    y = h * np.arange(300)
    z = LT.occupation_histogram(Path(y, np.zeros(300)), 1.0, bins=np.linspace(-1, 1, 9))
    assert z.total() == pytest.approx(1.0)
    assert z.mass[4] == pytest.approx(1.0)  # bin [0, 0.25)
    lin = LT.occupation_histogram(Path(y, y), 1.0, bins=np.linspace(0, 1.25, 11))
    np.testing.assert_allclose(lin.density[:8], 1.0, rtol=1e-12)
    assert lin.total() == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(0)
    occ = LT.occupation_histogram(Path(y, rng.standard_normal(300).cumsum() * 0.06), 1.0)
    assert occ.total() == pytest.approx(1.0, rel=1e-12)


def test_occupation_auto_extend_warns():
    h = 2.0 ** -8
    y = h * np.arange(300)
    with pytest.warns(RuntimeWarning):
        occ = LT.occupation_histogram(Path(y, 3 * y), 1.0, bins=np.linspace(0, 1, 5))
    assert occ.edges[-1] > 3.0 and occ.total() == pytest.approx(1.0)


# ---------------------------------------------------------------- space local time

def test_far_level_and_resolution(space_paths):
    p = one(space_paths, 0)
    mol = LT.Mollifier.from_bandwidth(2.0 ** -4)
    assert LT.local_time_space(p, 50.0, 1.0, mol) == 0.0
    with pytest.raises(ConfigError):
        LT.local_time_space(p, 0.0, 1.0, LT.Mollifier.from_bandwidth(2.0 ** -7))
    with pytest.raises(DomainError):
        LT.local_time_space(space_paths, 0.0, 1.0, mol)


@pytest.mark.parametrize("profile", ["bump", "gaussian"])
def test_occupation_formula(space_paths, profile):
    h = 2.0 ** -4
    mol = LT.Mollifier.from_bandwidth(h, profile)
    psis = {"one": lambda a: np.ones_like(a), "a": lambda a: a, "a2": np.square, "sin": np.sin}
    step = space_paths.step
    n1 = int(round(1.0 / step))
    for k in range(10):
        p = one(space_paths, k)
        est = LT.local_time_profile(p, 1.0, mol)
        assert np.all(est.mass >= 0)
        w = p.values[:n1 + 1]
        for name, psi in psis.items():
            lhs = trap(psi(w), step)
            rhs = est.integrate(psi)
            tol = 0.01 * trap(np.abs(psi(w)), step) + 2 * (SD * h) ** 2 + 1e-4
            assert abs(lhs - rhs) <= tol, (k, name, lhs, rhs)


def test_space_mass_conservation(space_paths):
    mol = LT.Mollifier.from_bandwidth(2.0 ** -4.5)
    for k in range(space_paths.n_replicates):
        assert LT.local_time_profile(one(space_paths, k), 1.0, mol).total() == pytest.approx(1.0, rel=0.01)


def test_profiles_agree_within_bandwidth_bias(space_paths):
    p = one(space_paths, 3)
    h = 2.0 ** -4
    b = LT.local_time_profile(p, 1.0, LT.Mollifier.from_bandwidth(h))
    g = LT.local_time_profile(p, 1.0, LT.Mollifier.from_bandwidth(h, "gaussian"))
    assert b.integrate(np.square) == pytest.approx(g.integrate(np.square), abs=4 * (SD * h) ** 2)
    rows = list(b.rows())
    assert len(rows) == 256 and rows[0][3] == "plain"


# ---------------------------------------------------------------- time local time

def test_weighted_mass(time_paths):
    mol = LT.Mollifier.from_bandwidth(0.3)
    for k in range(20):
        p = one(time_paths, k)
        est = LT.local_time_profile(p, 1.0, mol)
        assert est.weight_kind == "sqrt-time-weighted"
        assert est.total() == pytest.approx(1 / math.sqrt(math.pi), rel=0.01)
        assert LT.weighted_local_time_time(p, 0.0, 0.0, mol) == 0.0
        assert LT.weighted_local_time_time(p, 40.0, 1.0, mol) == 0.0


# ---------------------------------------------------------------- Bouleau-Yor

def test_bouleau_yor_constant_and_identity(space_paths):
    mol = LT.Mollifier.from_bandwidth(2.0 ** -3.5)
    d = 2.0 ** -7
    res = []
    for k in range(20):
        p = one(space_paths, k)
        assert abs(LT.bouleau_yor_residual("constant(2)", p, 1.0, d, mol)) <= 1e-12
        est = LT.local_time_profile(p, 1.0, mol)
        # summation by parts: -int a dL = int L da
        assert -LT.stieltjes_sum("identity", est) == pytest.approx(est.total(), rel=1e-10)
        res.append(LT.bouleau_yor_residual("identity", p, 1.0, d, mol))
    assert abs(np.mean(res)) <= 0.1


def test_bouleau_yor_indicator_example(space_paths):
    d = 2.0 ** -7
    mol = LT.Mollifier.from_bandwidth(LT.bandwidth_for(d, 0.5))
    r = [LT.bouleau_yor_residual("indicator(-0.3,0.3)", one(space_paths, k), 1.0, d, mol)
         for k in range(space_paths.n_replicates)]
    assert np.mean(np.abs(r)) <= 0.1


# ---------------------------------------------------------------- Tanaka

def test_tanaka_space_far_level_and_sum_rule(space_paths):
    d = 2.0 ** -8
    mol = LT.Mollifier.from_bandwidth(LT.bandwidth_for(d))
    for k in range(10):
        p = one(space_paths, k)
        r1, r2, r3 = LT.tanaka_residual_space(-20.0, p, 1.0, d, mol)
        # plain telescoping: (W_x - a) - (W_0 - a) minus the forward integral of 1
        i1 = int(round(1.0 / p.step))
        fwd = float(Q.forward_integral_space(p, "constant(1)", 1.0, d))
        assert r1 == pytest.approx(p.values[i1] - p.values[0] - fwd, abs=1e-12)
        assert r2 == 0.0
        a = float(np.median(p.values))
        r1, r2, r3 = LT.tanaka_residual_space(a, p, 1.0, d, mol)
        assert r3 == r1 + r2


def test_tanaka_space_median_level(space_paths):
    d = 2.0 ** -9
    mol = LT.Mollifier.from_bandwidth(LT.bandwidth_for(d))
    n1 = int(round(1.0 / space_paths.step))
    r = np.array([LT.tanaka_residual_space(float(np.median(v[:n1 + 1])), one(space_paths, k), 1.0, d, mol)
                  for k, v in enumerate(space_paths.values)])
    assert np.all(np.abs(r).mean(axis=0) <= 0.1)


def test_tanaka_time_far_level(time_paths):
    eps = 2.0 ** -6
    mol = LT.Mollifier.from_bandwidth(LT.bandwidth_for(eps, 0.25))
    p = one(time_paths, 0)
    r1, r2, r3 = LT.tanaka_residual_time(-30.0, p, 1.0, eps, mol)
    n1 = int(round(1.0 / p.step))
    div = float(Q.divergence_integral_time(p, "constant(1)", 1.0, eps))
    assert r1 == pytest.approx(p.values[n1] - div, abs=1e-12)
    assert abs(r1) <= 1e-12 and r2 == 0.0 and r3 == r1 + r2


def tanaka_time_means(time_paths, levels):
    out = []
    for eps in levels:
        mol = LT.Mollifier.from_bandwidth(LT.bandwidth_for(eps, 0.25))
        r = [LT.tanaka_residual_time(0.0, one(time_paths, k), 1.0, eps, mol)[2]
             for k in range(100)]
        out.append(np.mean(np.abs(r)))
    return np.array(out)


def test_tanaka_time_zero_level(time_paths):
    m = tanaka_time_means(time_paths, (2.0 ** -5, 2.0 ** -6, 2.0 ** -7))
    assert m[-1] <= 0.1


def test_tanaka_time_refinement_trend(time_paths):
    m = tanaka_time_means(time_paths, (2.0 ** -5, 2.0 ** -6, 2.0 ** -7))
    assert trend_violations(m) <= 1
