import warnings

import numpy as np
import pytest

from mmotfs.lattice import OtfsGrid
from mmotfs.pilots import design_pilots, make_layout


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_grid():
    return OtfsGrid(M=64, N=16, M_CP=16, delta_f=15e3, N_t=8)


@pytest.fixture
def desk_layout(desk_grid):
    return make_layout(desk_grid, M_p=23, N_p=16, N_g=6, M_g=8)


@pytest.fixture
def desk_pilots(desk_layout):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return design_pilots(desk_layout, 8)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
