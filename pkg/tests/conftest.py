import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heatqv import sampler as S

settings.register_profile("heatqv", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("heatqv")


_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_lines():
    return _ACCEPTANCE


@pytest.fixture(scope="session")
def space_paths():
    """100 space paths at t = 1 on [0, 1.0625] with dx = 2^-12."""
    g = S.FieldGrid(np.array([1.0]), np.arange(4353) * 2.0 ** -12, max_points=5000)
    smp = S.sample_field(g, 100, 101)
    return S.stack_paths([S.slice_space(s, 0) for s in smp])


@pytest.fixture(scope="session")
def time_paths():
    """200 time paths at x = 0 on [0, 1.03125] with dt = 2^-11."""
    g = S.FieldGrid(np.arange(2113) * 2.0 ** -11, np.array([0.0]), max_points=5000)
    smp = S.sample_field(g, 200, 202)
    return S.stack_paths([S.slice_time(s, 0) for s in smp])


@pytest.fixture(scope="session")
def time_paths_t4():
    """200 time paths at x = 0 on [0, 4.125] with dt = 2^-9."""
    g = S.FieldGrid(np.arange(2113) * 2.0 ** -9, np.array([0.0]), max_points=5000)
    smp = S.sample_field(g, 200, 203)
    return S.stack_paths([S.slice_time(s, 0) for s in smp])
