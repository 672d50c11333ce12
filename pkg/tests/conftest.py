"""Shared fixtures: manufactured problems with closed-form solutions."""

import numpy as np
import pytest

import stefanopt as so


def const_like(value):
    def fn(x, t):
        return value * np.ones_like(np.asarray(x, dtype=float)
                                    * np.asarray(t, dtype=float))
    return fn


@pytest.fixture(scope="session")
def quadratic_problem():
    """Fixed boundary s = 1 with exact field u(x, t) = x^2 + 2t.

    With unit diffusion and no convection, reaction, pressure or source the
    field satisfies the equation exactly; the fixed-end flux vanishes and the
    boundary trace is 2x evaluated at the interface.
    """
    return so.ProblemData(
        a=const_like(1.0), p=const_like(0.0), gamma=const_like(0.0),
        chi=lambda x, t: 2.0 * np.asarray(x, dtype=float) * np.ones_like(np.asarray(t, dtype=float)),
        phi=lambda x: np.asarray(x, dtype=float) ** 2,
        mu=lambda t: 1.0 + 2.0 * np.asarray(t, dtype=float),
        w=lambda x: np.asarray(x, dtype=float) ** 2 + 2.0,
        s0=1.0, T=1.0, ell=2.0, delta=0.25, R=10.0)


@pytest.fixture(scope="session")
def zero_problem():
    """Everything zero: the state must vanish identically."""
    return so.ProblemData(
        a=const_like(1.0), p=const_like(0.0), gamma=const_like(0.0),
        chi=const_like(0.0), phi=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        mu=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        w=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        s0=1.0, T=1.0, ell=2.0, delta=0.25, R=10.0)


def solve_quadratic(data, n, m0=None):
    """Forward solve of the quadratic_problem at resolution n."""
    if m0 is None:
        m0 = n
    tg = so.build_time_grid(data.T, n)
    grid = so.build_moving_grid(np.ones(n + 1) * data.s0, ell=data.ell,
                                delta=data.delta, m0=m0)
    v = so.zero_control(n, grid.n_cells, 3, s0=data.s0)
    return so.run_forward(v, data, grid, tg), v, grid, tg
