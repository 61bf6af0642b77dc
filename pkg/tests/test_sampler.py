import io

import numpy as np
import pytest
from scipy import stats

from heatqv import kernels as K
from heatqv import sampler as S
from heatqv.errors import CapacityError, DomainError, FactorizationError


def small_grid():
    return S.FieldGrid(np.array([0.0, 0.5, 1.0]), np.array([-0.5, 0.0, 0.5, 1.0]))


def test_grid_validation():
    with pytest.raises(DomainError):
        S.FieldGrid([1.0, 0.5], [0.0])
    with pytest.raises(DomainError):
        S.FieldGrid([-1.0, 0.5], [0.0])
    with pytest.raises(DomainError):
        S.FieldGrid([], [0.0])
    g = S.FieldGrid(np.arange(5) * 0.25, [0.0, 0.1])
    assert g.dt == pytest.approx(0.25) and g.dx == pytest.approx(0.1)
    with pytest.raises(CapacityError):
        S.build_covariance(S.FieldGrid(np.arange(1, 101), np.arange(100), max_points=8192))


def test_covariance_examples():
    c = S.build_covariance(S.FieldGrid([1.0], [0.0]))
    assert c.shape == (1, 1) and c[0, 0] == pytest.approx(K.variance(1.0))
    c = S.build_covariance(S.FieldGrid([1.0], [0.0, 1.0]))
    assert c[0, 1] == pytest.approx(0.19964122837424567, rel=1e-12)
    g = small_grid()
    a = S.build_covariance(g)
    b = S.build_covariance(g, method="quad")
    assert np.array_equal(a, a.T)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-14)
    assert np.all(a[:4] == 0) and np.all(a[:, :4] == 0)


def test_factor_examples():
    L, jit = S.factor_psd(np.eye(3))
    np.testing.assert_array_equal(L, np.eye(3))
    assert jit == 0.0
    f = S.factor_psd(np.ones((2, 2)))
    # second pivot is the Schur complement (1 + j) - 1 / (1 + j) <= 2 j
    assert 0 < f.jitter and f.L[1, 1] ** 2 <= 2 * f.jitter + 4 * np.finfo(float).eps
    np.testing.assert_allclose(f.L @ f.L.T, np.ones((2, 2)) + f.jitter * np.eye(2), atol=1e-12)
    with pytest.raises(FactorizationError):
        S.factor_psd(np.array([[1.0, 2.0], [2.0, 1.0]]), S.SamplerConfig(max_retries=2))
    with pytest.raises(DomainError):
        S.factor_psd(np.array([[1.0, 0.5], [0.4, 1.0]]))


def test_factor_reconstruction_64_points():
    g = S.FieldGrid(np.linspace(1 / 8, 1, 8), np.linspace(0, 1, 8))
    m = S.build_covariance(g)
    f = S.factor_psd(m)
    err = np.linalg.norm(f.L @ f.L.T - m - f.jitter * np.eye(64)) / np.linalg.norm(m)
    assert err <= 1e-8


def test_zero_rows_skipped():
    g = small_grid()
    f = S.factor_psd(S.build_covariance(g))
    assert f.active.size == 8
    assert np.all(f.L[:4] == 0)


def test_determinism_and_partitioning():
    g = small_grid()
    a = S.sample_field(g, 40, 11)
    b = S.sample_field(g, 40, 11, threads=4)
    c = S.sample_field(g, 15, 11, first=25)
    assert S.sample_field(g, 0, 11) == []
    for x, y in zip(a, b):
        assert x.values.tobytes() == y.values.tobytes()
    for x, y in zip(a[25:], c):
        assert x.values.tobytes() == y.values.tobytes() and x.replicate == y.replicate
    d = S.sample_field(g, 1, 12)
    assert d[0].values.tobytes() != a[0].values.tobytes()


def test_zero_initial_condition_and_slices():
    g = small_grid()
    s = S.sample_field(g, 3, 5)[1]
    assert np.max(np.abs(s.values[0])) == 0.0
    assert np.all(S.slice_space(s, 0).values == 0.0)
    ps, pt = S.slice_space(s, 2), S.slice_time(s, 3)
    assert ps.values.size == 4 and pt.values.size == 3
    assert ps.values[3] == pt.values[2] == s.values[2, 3]
    with pytest.raises(IndexError):
        S.slice_space(s, 3)
    with pytest.raises(IndexError):
        S.slice_time(s, 4)


def test_empirical_covariance_four_points():
    g = S.FieldGrid([0.5, 1.0], [0.0, 0.7])
    n = 2000
    v = np.stack([s.values.ravel() for s in S.sample_field(g, n, 21)])
    c = S.build_covariance(g)
    emp = np.cov(v, rowvar=False, ddof=1)
    # se of a sample covariance for Gaussians: sqrt((c_ij^2 + c_ii c_jj) / n)
    se = np.sqrt((c ** 2 + np.outer(np.diag(c), np.diag(c))) / n)
    assert np.all(np.abs(emp - c) <= 5 * se)


def test_gaussianity_smoke():
    g = S.FieldGrid([0.3, 1.0], [0.0, 0.5])
    n = 2000
    v = np.stack([s.values.ravel() for s in S.sample_field(g, n, 22)])
    assert np.all(np.abs(stats.skew(v, axis=0)) <= 5 * np.sqrt(6 / n))
    assert np.all(np.abs(stats.kurtosis(v, axis=0)) <= 5 * np.sqrt(24 / n))


def test_serialization_roundtrip():
    s = S.sample_field(small_grid(), 2, 9)[1]
    buf = io.BytesIO()
    S.write_sample(buf, s)
    buf.seek(0)
    r = S.read_sample(buf)
    assert r.values.tobytes() == s.values.tobytes()
    assert (r.seed, r.replicate) == (9, 1) and r.grid == s.grid
    with pytest.raises(DomainError):
        S.read_sample(io.BytesIO(b"junk"))
    text = S.sample_to_csv(s)
    lines = text.splitlines()
    assert lines[0] == "t,x,value" and len(lines) == 13


def test_stack_paths():
    smp = S.sample_field(small_grid(), 3, 4)
    p = S.stack_paths([S.slice_space(x, 1) for x in smp])
    assert p.values.shape == (3, 4) and p.n_replicates == 3
    with pytest.raises(DomainError):
        S.stack_paths([S.slice_space(smp[0], 1), S.slice_time(smp[0], 1)])
