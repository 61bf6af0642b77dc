import numpy as np
import pytest

from heatqv import fd
from heatqv import kernels as K
from heatqv.errors import ConfigError
from heatqv.sampler import FieldGrid


def test_stability_guard():
    g = FieldGrid([0.0, 0.5], [0.0], dt=0.01, dx=0.05)
    with pytest.raises(ConfigError):
        fd.fd_integrate(g, 2, 0)


def test_grid_compatibility():
    g = FieldGrid([0.0, 0.3], [0.013], dt=2.0 ** -8, dx=2.0 ** -4)
    with pytest.raises(ConfigError):
        fd.fd_lattice(g)


def test_zero_noise_gives_zero_field():
    g = FieldGrid([0.0, 0.25, 0.5], [-0.5, 0.0, 0.5], dt=2.0 ** -8, dx=2.0 ** -4)
    for m in ("modes", "step"):
        s = fd.fd_integrate(g, 2, 1, noise_scale=0.0, method=m, L=2.0)
        assert all(np.all(x.values == 0) for x in s)


def test_mode_covariance_matches_lyapunov():
    g = FieldGrid(np.array([0.0, 2, 5]) * 2.0 ** -8, [-0.25, 0.0, 0.5], dt=2.0 ** -8, dx=2.0 ** -4)
    a = fd.fd_covariance(g, L=1.0)
    b = fd.fd_covariance(g, L=1.0, method="lyapunov")
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)


def test_step_and_modes_same_law():
    g = FieldGrid(np.array([0.0, 4, 8]) * 2.0 ** -8, [0.0, 0.25], dt=2.0 ** -8, dx=2.0 ** -4)
    n = 1500
    c = fd.fd_covariance(g, L=1.0)
    for m in ("modes", "step"):
        v = np.stack([s.values.ravel() for s in fd.fd_integrate(g, n, 3, L=1.0, method=m)])
        emp = np.cov(v, rowvar=False)
        se = np.sqrt((c ** 2 + np.outer(np.diag(c), np.diag(c))) / n) + 1e-15
        assert np.all(np.abs(emp - c) <= 5 * se), m


def test_scheme_covariance_converges_to_exact():
    # discretization error of the scheme itself, no Monte Carlo
    g = FieldGrid([0.0, 0.5, 1.0], [0.0], dt=2.0 ** -15, dx=2.0 ** -7)
    c = fd.fd_covariance(g, L=8.0)
    assert c[2, 2] == pytest.approx(K.variance(1.0), rel=0.01)
    assert c[1, 2] == pytest.approx(float(K.cov_time(1.0, 0.5)), rel=0.01)


def test_determinism():
    g = FieldGrid([0.0, 0.5], [0.0], dt=2.0 ** -8, dx=2.0 ** -4)
    a = fd.fd_integrate(g, 5, 7)
    b = fd.fd_integrate(g, 3, 7, first=2)
    for x, y in zip(a[2:], b):
        assert x.values.tobytes() == y.values.tobytes()
