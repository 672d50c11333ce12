"""Grid construction: time grid, boundary-adapted spatial grid, nestedness."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import stefanopt as so
from stefanopt.errors import ConstraintViolationError, InvalidArgumentError
from stefanopt.grids import segment_cells


def test_time_grid_nodes():
    tg = so.build_time_grid(2.0, 4)
    assert tg.tau == 0.5
    np.testing.assert_allclose(tg.nodes, [0.0, 0.5, 1.0, 1.5, 2.0])


def test_time_grid_validation():
    with pytest.raises(InvalidArgumentError):
        so.build_time_grid(0.0, 4)
    with pytest.raises(InvalidArgumentError):
        so.build_time_grid(1.0, 1)


def test_hand_example_advancing_boundary():
    # s = (1, 1, 1.5) on [0, 2] with a 2-cell base grid:
    # base nodes 0, 0.5, 1; one inserted node at 1.5; uniform tail to 2.
    grid = so.build_moving_grid(np.array([1.0, 1.0, 1.5]), ell=2.0,
                                delta=0.5, m0=2)
    np.testing.assert_allclose(grid.xs, [0.0, 0.5, 1.0, 1.5, 2.0])
    np.testing.assert_array_equal(grid.m, [2, 2, 3])
    assert grid.base_h == 0.5
    assert grid.tail_h == 0.5
    assert list(segment_cells(grid, 0)) == [0, 1]
    assert list(segment_cells(grid, 2)) == [0, 1, 2]


def test_boundary_values_are_nodes():
    s = np.array([1.0, 1.0, 0.8, 1.3, 1.1])
    grid = so.build_moving_grid(s, ell=2.0, delta=0.5, m0=5)
    for k, sk in enumerate(s):
        assert grid.xs[grid.m[k]] == pytest.approx(sk, abs=1e-15)


def test_flat_start_required():
    with pytest.raises(ConstraintViolationError):
        so.build_moving_grid(np.array([1.0, 1.1, 1.2]), ell=2.0, delta=0.5, m0=2)


def test_delta_and_ell_bounds():
    with pytest.raises(ConstraintViolationError):
        so.build_moving_grid(np.array([0.4, 0.4, 0.6]), ell=2.0, delta=0.5, m0=2)
    with pytest.raises(ConstraintViolationError):
        so.build_moving_grid(np.array([1.0, 1.0, 2.5]), ell=2.0, delta=0.5, m0=2)


def test_mesh_time_coupling_enforced():
    s = np.ones(5)
    # base h = 0.5 with sqrt(tau) tiny -> must refuse
    with pytest.raises(ConstraintViolationError):
        so.build_moving_grid(s, ell=2.0, delta=0.5, m0=2, tau=1e-6, htau_c=1.0)
    so.build_moving_grid(s, ell=2.0, delta=0.5, m0=2, tau=0.5, htau_c=1.0)


def test_snap_collapses_degenerate_cells():
    s0 = 1.0
    s = np.array([s0, s0, s0 + 1e-13])
    grid = so.build_moving_grid(s, ell=2.0, delta=0.5, m0=4)
    assert np.all(np.diff(grid.xs) > 0)
    assert grid.snapped == (2,)


def test_default_m0_scaling():
    assert so.default_m0(1.0, 0.01) == 10
    assert so.default_m0(1.0, 1.0) == 2


def test_grid_arrays_read_only():
    grid = so.build_moving_grid(np.ones(3), ell=2.0, delta=0.5, m0=2)
    with pytest.raises(ValueError):
        grid.xs[0] = 5.0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=0.5, max_value=1.9), min_size=2, max_size=8),
       st.integers(min_value=2, max_value=7))
def test_grid_properties_random(boundary, m0):
    s = np.array([boundary[0]] + boundary)
    grid = so.build_moving_grid(s, ell=2.0, delta=0.5, m0=m0)
    # strictly increasing nodes covering [0, ell]
    assert grid.xs[0] == 0.0
    assert grid.xs[-1] == pytest.approx(2.0)
    assert np.all(np.diff(grid.xs) > 0)
    # each boundary value sits at its recorded node (up to snapping)
    for k, sk in enumerate(s):
        assert grid.xs[grid.m[k]] == pytest.approx(sk, abs=1e-11)
    # the base region is uniform
    np.testing.assert_allclose(np.diff(grid.xs[:grid.m0 + 1]), grid.base_h,
                               rtol=1e-12)
    # nestedness along the sorted order: node counts are nondecreasing
    ordered = grid.m[grid.perm]
    assert np.all(np.diff(ordered) >= 0)
