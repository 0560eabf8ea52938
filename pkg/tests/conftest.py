import numpy as np
import pytest

from iriscap.dataset import build_plan
from iriscap.synth import PopulationParams, generate_population
from iriscap.template import TemplateGeometry, pack_template

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number")


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "criterion", None)
    if item_marker is None:
        return
    if not (report.when == "call" or report.failed or report.skipped):
        return
    status = "FAIL" if report.failed else "SKIP" if report.skipped else "PASS"
    rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    prev = _CRITERIA.get(item_marker, "PASS")
    _CRITERIA[item_marker] = max(prev, status, key=rank.get)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, text), status in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n}: {status:4s}  {text}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_template(rng, geometry, mask_density=0.9, identity="x", sample="x"):
    code = rng.random(geometry.shape) < 0.5
    cell = rng.random(geometry.shape[1:]) < mask_density
    mask = np.broadcast_to(cell, geometry.shape)
    return pack_template(code, mask, geometry, identity, sample)


@pytest.fixture(scope="session")
def small_population():
    params = PopulationParams(n_identities=12, seed=5)
    pop = generate_population(params)
    return pop, build_plan(pop.records)


@pytest.fixture(scope="session")
def d2_geometry():
    return TemplateGeometry.stripped("D2", "Single")
