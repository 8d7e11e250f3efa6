import numpy as np
import pytest

from pipeleak.hydraulics import MeasurementGrid, PipeSystem


@pytest.fixture(scope="session")
def pipe():
    return PipeSystem()


@pytest.fixture(scope="session")
def grid(pipe):
    return MeasurementGrid.harmonic(pipe)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
