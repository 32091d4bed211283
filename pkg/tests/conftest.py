import numpy as np
import pytest

from residue_ocp import ModelParams, solve_direct, solve_fbsm

ACCEPTANCE_LINES = []


@pytest.fixture
def base():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def baseline_direct():
    return solve_direct(ModelParams())


@pytest.fixture(scope="session")
def baseline_fbsm():
    return solve_fbsm(ModelParams())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
