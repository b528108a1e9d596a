import math

import numpy as np
import pytest

from elastic_fds import Material

# exterior medium and inclusion used throughout the experiments
CL0, CT0, RHO0 = math.sqrt(3.0), 1.0, 1.0
CL1, CT1, RHO1 = 3.0, 1.5, 2.0


def materials(omega=4.0, rho1=RHO1):
    return (Material.from_speeds(CL0, CT0, RHO0, omega),
            Material.from_speeds(CL1, CT1, rho1, omega))


@pytest.fixture
def mats():
    return materials(4.0)


@pytest.fixture
def mats5():
    return materials(5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b)))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
