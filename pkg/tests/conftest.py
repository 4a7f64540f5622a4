import numpy as np
import pytest

from liftinv.config import bundled_path, load_yaml, resolve
from liftinv.dynamics import NonlinearSystem, build_sample
from liftinv.geometry import Polytope
from liftinv.invariance import run_algorithm1
from liftinv.lifting import build_cascade_immersion
from liftinv.sampling import grid_points, pitch_for_count

# ------------------------------------------------------------ shared fixtures


@pytest.fixture(scope="session")
def building_cfg():
    return resolve(load_yaml(bundled_path("building")))


@pytest.fixture(scope="session")
def building_grid(building_cfg):
    eta = pitch_for_count(building_cfg.X, 13000)
    return eta, grid_points(building_cfg.X, eta)


@pytest.fixture(scope="session")
def building_sample(building_cfg, building_grid):
    return build_sample(building_cfg.system, building_cfg.X, building_grid[1],
                        building_cfg.pipeline["t_f"])


@pytest.fixture(scope="session")
def building_a1(building_cfg, building_sample):
    p = building_cfg.pipeline
    return run_algorithm1(building_cfg.system, building_cfg.X, p["delta_target"],
                          building_sample, p["M_max"], k_max=p["k_max"])


@pytest.fixture(scope="session")
def wiener_cfg():
    return resolve(load_yaml(bundled_path("wiener")))


@pytest.fixture(scope="session")
def wiener_model(wiener_cfg):
    return build_cascade_immersion(wiener_cfg.cascade)


@pytest.fixture
def unit_box():
    return Polytope.box([-1, -1], [1, 1])


@pytest.fixture
def doubling():
    return NonlinearSystem.linear([[2.0]])


# ------------------------------------------------- acceptance summary lines

_criteria: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if rep.when == "call" or rep.failed:
        ok = rep.passed and _criteria.get(n, (True,))[0]
        _criteria[n] = (ok, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, name = _criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  ({name})")
