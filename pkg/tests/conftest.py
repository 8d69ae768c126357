import pytest

from gouysim.beamgeom import BeamParams, FiberMode

LAMBDA = 810e-9
W0 = 25e-6


@pytest.fixture
def beam():
    return BeamParams(LAMBDA, W0, 0.0)


@pytest.fixture
def small_fiber():
    return FiberMode(W0 / 10)


@pytest.fixture
def lab_fiber():
    return FiberMode.from_mfd(5e-6)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
