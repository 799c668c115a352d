import math

import numpy as np
import pytest
from hypothesis import strategies as st

from lbstrip.geometry import DomainConfig, Rect


def unit_vectors():
    return st.floats(0.0, 2.0 * math.pi, allow_nan=False).map(lambda a: np.array([math.cos(a), math.sin(a)]))


@pytest.fixture
def empty_strip():
    return DomainConfig(rho_left=1.0, rho_right=0.5)


@pytest.fixture
def square_strip():
    return DomainConfig(obstacles=(Rect.from_size(2.0, 0.5, 0.8, 0.8),), rho_left=1.0, rho_right=0.5)


# one line per acceptance criterion, echoed after the test run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
