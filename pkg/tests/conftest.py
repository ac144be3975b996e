import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "desq", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("desq")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_classification():
    from desq.dataset import Dataset, Task

    X = np.array([[0.0, 0.1], [0.2, -0.1], [0.1, 0.0], [5.0, 5.1], [5.2, 4.9], [4.9, 5.0]])
    Y = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    return Dataset(X, Y, Task.CLASSIFICATION, ("a", "b"))


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report():
    def emit(line):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
