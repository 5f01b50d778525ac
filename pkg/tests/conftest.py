import numpy as np
import pytest
from hypothesis import settings

from fracflow.field import Boundary, Grid
from fracflow.operator import EllipticOperator, parse_coefficients

settings.register_profile("fracflow", max_examples=25, deadline=None)
settings.load_profile("fracflow")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def grid1():
    return Grid(1, 1, 32)


@pytest.fixture
def laplacian1(grid1):
    return EllipticOperator(grid1, parse_coefficients("identity", 1))


def make_op(dim=1, N=1, n=32, coeff="identity", alpha=1.0, disc="fd", bc="periodic"):
    grid = Grid(dim, N, n, Boundary(bc))
    return EllipticOperator(grid, parse_coefficients(coeff, dim), alpha, disc)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
