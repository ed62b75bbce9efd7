import numpy as np
import pytest

from focklab import FockParams, GridSpec, build_grid

# acceptance outcomes, reported at the end of the session
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture(scope="session")
def params():
    return FockParams(alpha=1.0, n=1)


@pytest.fixture(scope="session")
def fine_grid():
    return build_grid(GridSpec(1, 8.0, 0.05))


@pytest.fixture(scope="session")
def coarse_grid():
    return build_grid(GridSpec(1, 8.0, 0.1))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
