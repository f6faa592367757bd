import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bridgemde import InvalidArgument, build_time_grid, l2_distance, l2_norm, lebesgue_measure
from bridgemde.dynamics import Trajectory

GRID = build_time_grid(1.0, 20)
MU = lebesgue_measure(GRID)
values = arrays(np.float64, GRID.size, elements=st.floats(-1e3, 1e3))


def traj(v, grid=GRID):
    return Trajectory(grid, np.asarray(v, dtype=float))


def test_zero_function():
    assert l2_norm(traj(np.zeros(GRID.size)), MU) == 0.0


def test_unit_function():
    assert l2_norm(traj(np.ones(GRID.size)), MU) == pytest.approx(1.0, abs=1e-15)


def test_identity_function(grid2000):
    mu = lebesgue_measure(grid2000)
    f = traj(grid2000.points, grid2000)
    assert abs(l2_norm(f, mu) - math.sqrt(1 / 3)) < 1e-4
    assert abs(l2_distance(f, traj(np.zeros(grid2000.size), grid2000), mu) - math.sqrt(1 / 3)) < 1e-4


def test_grid_mismatch():
    other = build_time_grid(1.0, 10)
    with pytest.raises(InvalidArgument):
        l2_norm(traj(np.zeros(other.size), other), MU)
    with pytest.raises(InvalidArgument):
        l2_distance(traj(np.zeros(GRID.size)), traj(np.zeros(other.size), other), MU)


@given(values)
def test_distance_to_self(f):
    assert l2_distance(traj(f), traj(f), MU) == 0.0


@given(values, values)
def test_symmetry(f, g):
    assert l2_distance(traj(f), traj(g), MU) == l2_distance(traj(g), traj(f), MU)


@settings(max_examples=200)
@given(values, values, values)
def test_triangle_inequality(f, g, h):
    d = lambda a, b: l2_distance(traj(a), traj(b), MU)
    assert d(f, h) <= d(f, g) + d(g, h) + 1e-12 * (1 + d(f, g) + d(g, h))


@given(values, st.floats(-1e3, 1e3))
def test_scaling(f, c):
    assert l2_norm(traj(c * f), MU) == pytest.approx(abs(c) * l2_norm(traj(f), MU), rel=1e-12, abs=1e-140)
