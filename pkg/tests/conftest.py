import math

import numpy as np
import pytest

from pkslab import preset, run_scenario
from pkslab.grid import Field, make_grid

_CRITERIA = {}
_ACCEPTANCE_SECONDS = [0.0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion id")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.module.__name__.endswith("test_acceptance"):
        _ACCEPTANCE_SECONDS[0] += rep.duration
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    title_, status, props = _CRITERIA.get(num, (title, "PASS", {}))
    if rep.failed:
        status = "FAIL"
    elif rep.skipped and status == "PASS":
        status = "SKIP"
    props.update(item.user_properties)
    _CRITERIA[num] = (title_, status, props)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, status, props = _CRITERIA[num]
        detail = ", ".join(f"{k}={v}" for k, v in props.items())
        terminalreporter.write_line(f"criterion {num:2d} {status}  {title}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def acceptance_seconds():
    return lambda: _ACCEPTANCE_SECONDS[0]


def _gaussian_field(dim, n, box_length, sigma, mass=1.0, center=None):
    grid = make_grid(dim, n, box_length)
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - c) ** 2 for x, c in zip(grid.coordinates(), center))
    vals = mass * (2 * math.pi * sigma**2) ** (-dim / 2) * np.exp(-r2 / (2 * sigma**2))
    return Field(grid, real=np.broadcast_to(vals, grid.shape).copy())


@pytest.fixture(scope="session")
def gaussian():
    """Sampled normalized Gaussian bump: gaussian(dim, n, L, sigma, mass=1, center=None)."""
    return _gaussian_field


# long runs shared by the acceptance and harness suites
@pytest.fixture(scope="session")
def small_mass():
    rep = run_scenario(preset("small_mass_2d"), write=False, keep_trajectory=True)
    assert rep.status == "completed", rep.abort_reason
    assert not rep.failures, rep.failures
    return rep


@pytest.fixture(scope="session")
def small_mass_picard():
    rep = run_scenario(preset("small_mass_picard_2d"), write=False, keep_trajectory=True)
    assert rep.status == "completed", rep.abort_reason
    return rep
