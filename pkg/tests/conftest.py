"""Shared fixtures: fitted kernels and common sphere discretizations."""

import numpy as np
import pytest

from cellopt.bem import QuadratureScheme, assemble_operators
from cellopt.cell import solve_cell_problems
from cellopt.geometry import (ElementGrid, PolynomialSurface,
                              generate_primitive, refine_to_level)
from cellopt.kernel import PeriodicKernel
from cellopt.spaces import TraceSpace


@pytest.fixture(scope="session")
def kernel4():
    return PeriodicKernel.fit(degree=4)


@pytest.fixture(scope="session")
def kernel8():
    return PeriodicKernel.fit(degree=8)


@pytest.fixture(scope="session")
def kernel12():
    return PeriodicKernel.fit(degree=12)


def sphere_grid(radius, level):
    return refine_to_level(generate_primitive("sphere", radius=radius), level)


@pytest.fixture(scope="session")
def sphere_pipeline(kernel12):
    """Solved cell problems on the radius-0.15 sphere at level 3."""
    grid = sphere_grid(0.15, 3)
    surface = PolynomialSurface(grid, (4, 4))
    space_d = TraceSpace(grid, 2, continuous=True)
    space_n = TraceSpace(grid, 2, continuous=False)
    ops = assemble_operators(surface, space_d, space_n, kernel12)
    solution = solve_cell_problems(ops, space_d)
    return grid, surface, space_d, space_n, ops, solution
