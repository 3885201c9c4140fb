import numpy as np
import pytest

from borsuk4.covers import build_demo_r2, build_ucs_r4, lassak_cover

# lines collected by the acceptance module and echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def ucs():
    return build_ucs_r4()


@pytest.fixture(scope="session")
def l4():
    return lassak_cover(4)


@pytest.fixture(scope="session")
def planar():
    return build_demo_r2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
