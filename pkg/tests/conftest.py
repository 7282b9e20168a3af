import numpy as np
import pytest
from hypothesis import settings

from mfghomog.potential import parse_potential
from mfghomog.torus import TorusGrid

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def cos_potential():
    return parse_potential("0.5*cos(2*pi*y1)", 1)


@pytest.fixture
def xdep_potential():
    return parse_potential("0.25*cos(2*pi*x1) + 0.5*cos(2*pi*y1)", 1)


@pytest.fixture
def separable_2d():
    return parse_potential(["0.3*cos(2*pi*y1)", "0.3*cos(2*pi*y2)"], 2)


@pytest.fixture
def separable_2d_xdep():
    return parse_potential(
        ["0.2*cos(2*pi*x1) + 0.3*cos(2*pi*y1)", "0.3*cos(2*pi*y2) + 0.1*sin(2*pi*x2)"], 2
    )


@pytest.fixture
def zero_1d():
    return parse_potential("0", 1)


@pytest.fixture
def grid256():
    return TorusGrid(1, 256)


def sup(a, b=0.0):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
