import sys

import numpy as np
import pytest
from hypothesis import settings

from entropic_mf.markov import validate_generator

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


@pytest.fixture
def two_state():
    return validate_generator([[-1.0, 1.0], [1.0, -1.0]]), np.array([0.0, 1.0])


@pytest.fixture
def cycle3():
    R = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    return validate_generator(R), np.array([0.0, 1.0, 2.0])
