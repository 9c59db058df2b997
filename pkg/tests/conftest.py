import time

import pytest

from rprbox.model import REFERENCE_GEOMETRY
from rprbox.singularity import SliceSpec, SweepSpec, sweep_surface

ACCEPTANCE_LINES: list[str] = []
TIMINGS: dict[str, float] = {}

EX1_CENTER = (41.625, 24.875, 44.125)
EX1_HALF = 7.075


@pytest.fixture(scope="session")
def geom():
    return REFERENCE_GEOMETRY


@pytest.fixture(scope="session")
def reference_sweep_spec():
    return SweepSpec(0.0, 50.0, 0.5, SliceSpec(rho1=0.0, n_theta1=720, n_alpha=720, rho_bounds=(0.0, 60.0)))


@pytest.fixture(scope="session")
def reference_cloud(geom, reference_sweep_spec):
    """Full reference sweep; computed once per test session (~10 s)."""
    start = time.perf_counter()
    cloud = sweep_surface(geom, reference_sweep_spec, workers=4)
    TIMINGS["reference_sweep"] = time.perf_counter() - start
    return cloud


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
