from functools import lru_cache

import numpy as np
import pytest

from twophase.geometry import InterfaceDescriptor
from twophase.mesh.curved import lenoir_curve
from twophase.mesh.mesher import Rectangle, generate_fitted_mesh

CIRCLE = InterfaceDescriptor.circle(0.5)
ELLIPSE = InterfaceDescriptor.ellipse(0.6, 0.4)
STAR = InterfaceDescriptor.star(0.5, 0.1, 3)
SHAPES = {"circle": CIRCLE, "ellipse": ELLIPSE, "star": STAR}


@lru_cache(maxsize=None)
def flat_mesh(kind, h):
    return generate_fitted_mesh(Rectangle(), SHAPES[kind], h)


@lru_cache(maxsize=None)
def curved_mesh(kind, h, k):
    return lenoir_curve(flat_mesh(kind, h), SHAPES[kind], k)


def rates(h, e):
    h, e = np.asarray(h, float), np.asarray(e, float)
    return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
