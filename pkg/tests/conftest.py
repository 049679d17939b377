import numpy as np
import pytest

from pdgd_ops.cmdp import t1

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cm():
    return t1()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
