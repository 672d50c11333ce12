"""Minimization: fixed points, quadratic recovery, warm-start refinement."""

import numpy as np
import pytest

import stefanopt as so
from stefanopt.errors import InvalidArgumentError
from stefanopt.optimize import study_gaps

from conftest import solve_quadratic


def _measurements_zero():
    return so.Measurements(w=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                           mu=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
                           s_bar=1.0)


@pytest.fixture(scope="module")
def basis():
    return so.CoefficientBasis(size=3, ell=2.0, T=1.0)


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        so.OptimizerConfig(method="newton")
    with pytest.raises(InvalidArgumentError):
        so.OptimizerConfig(max_evals=0)
    with pytest.raises(InvalidArgumentError):
        so.OptimizerConfig(step_min=0.5, step_init=0.1)
    with pytest.raises(InvalidArgumentError):
        so.OptimizerConfig(free_blocks=("q",))


def test_fixed_point_at_optimum(quadratic_problem, basis):
    # measurements generated by the initial control itself: cost is already
    # zero, so no improving step exists and the control is returned unchanged
    state, v, grid, tg = solve_quadratic(quadratic_problem, 4, m0=4)
    meas = so.self_consistent_measurements(state)
    cfg = so.OptimizerConfig(max_evals=60, step_init=0.25, step_min=1e-2,
                             free_blocks=("g",))
    res = so.minimize_level(quadratic_problem, meas, 4, cfg, v, basis=basis, m0=4)
    assert res.best_cost.total <= 1e-12
    np.testing.assert_allclose(res.best_control.g, v.g, atol=1e-14)


def test_position_only_quadratic(zero_problem, basis):
    # beta2-only cost in s_n: the minimizer moves the final boundary to s_bar
    data = so.ProblemData(
        a=zero_problem.a, p=zero_problem.p, gamma=zero_problem.gamma,
        chi=zero_problem.chi, phi=zero_problem.phi, mu=zero_problem.mu,
        w=zero_problem.w, s0=1.0, T=1.0, ell=2.0, delta=0.25, R=10.0,
        beta0=0.0, beta1=0.0, beta2=1.0)
    meas = so.Measurements(w=data.w, mu=data.mu, s_bar=1.25)
    n = 4
    grid = so.build_moving_grid(np.ones(n + 1), ell=2.0, delta=0.25, m0=4)
    init = so.zero_control(n, grid.n_cells, 3, s0=1.0)
    cfg = so.OptimizerConfig(max_evals=400, step_init=0.5, step_min=1e-4,
                             free_blocks=("s",))
    res = so.minimize_level(data, meas, n, cfg, init, basis=basis, m0=4)
    assert abs(res.best_control.s[n] - 1.25) <= 5e-3
    assert res.best_cost.total <= 1e-4


def test_accepted_costs_nonincreasing(zero_problem, basis):
    data = so.ProblemData(
        a=zero_problem.a, p=zero_problem.p, gamma=zero_problem.gamma,
        chi=zero_problem.chi, phi=zero_problem.phi, mu=zero_problem.mu,
        w=lambda x: 0.1 * np.ones_like(np.asarray(x, dtype=float)),
        s0=1.0, T=1.0, ell=2.0, delta=0.25, R=10.0)
    meas = so.Measurements(w=data.w, mu=data.mu, s_bar=1.0)
    n = 4
    grid = so.build_moving_grid(np.ones(n + 1), ell=2.0, delta=0.25, m0=4)
    init = so.zero_control(n, grid.n_cells, 3, s0=1.0)
    cfg = so.OptimizerConfig(max_evals=120, free_blocks=("g",), seed=2)
    res = so.minimize_level(data, meas, n, cfg, init, basis=basis, m0=4)
    costs = np.array(res.accepted_costs)
    assert np.all(np.diff(costs) <= 0)
    assert res.best_cost.total <= costs[0]


def test_determinism_same_seed(zero_problem, basis):
    data = so.ProblemData(
        a=zero_problem.a, p=zero_problem.p, gamma=zero_problem.gamma,
        chi=zero_problem.chi, phi=zero_problem.phi, mu=zero_problem.mu,
        w=lambda x: 0.1 * np.ones_like(np.asarray(x, dtype=float)),
        s0=1.0, T=1.0, ell=2.0, delta=0.25, R=10.0)
    meas = so.Measurements(w=data.w, mu=data.mu, s_bar=1.0)
    n = 4
    grid = so.build_moving_grid(np.ones(n + 1), ell=2.0, delta=0.25, m0=4)
    init = so.zero_control(n, grid.n_cells, 3, s0=1.0)
    cfg = so.OptimizerConfig(max_evals=80, free_blocks=("g",), seed=9)
    r1 = so.minimize_level(data, meas, n, cfg, init, basis=basis, m0=4)
    r2 = so.minimize_level(data, meas, n, cfg, init, basis=basis, m0=4)
    assert r1.accepted_costs == r2.accepted_costs
    np.testing.assert_array_equal(r1.best_control.g, r2.best_control.g)


def test_refine_control_constant_blocks(basis):
    n = 4
    tg = so.build_time_grid(1.0, n)
    grid = so.build_moving_grid(np.ones(n + 1), ell=2.0, delta=0.25, m0=4)
    v = so.zero_control(n, grid.n_cells, 3, s0=1.0)
    v = v.with_block("g", np.full(n + 1, 2.0))
    fine, fine_grid = so.refine_control(v, tg, grid, basis, ell=2.0,
                                        delta=0.25, m0=4)
    assert fine.n == 2 * n
    np.testing.assert_allclose(fine.s, 1.0, atol=1e-12)
    np.testing.assert_allclose(fine.g, 2.0, atol=1e-12)
    np.testing.assert_allclose(fine.b, v.b, atol=1e-12)


def test_refine_control_preserves_coarse_cell_averages(basis):
    n = 4
    tg = so.build_time_grid(1.0, n)
    grid = so.build_moving_grid(np.ones(n + 1), ell=2.0, delta=0.25, m0=4)
    rng = np.random.default_rng(1)
    v = so.zero_control(n, grid.n_cells, 3, s0=1.0)
    v = v.with_block("f", rng.normal(size=(grid.n_cells, n)))
    fine, fine_grid = so.refine_control(v, tg, grid, basis, ell=2.0,
                                        delta=0.25, m0=4)
    # averaging the prolonged source back over a coarse cell reproduces it:
    # time cells halve exactly and the spatial grids coincide here
    np.testing.assert_array_equal(fine_grid.xs, grid.xs)
    back = 0.5 * (fine.f[:, 0::2] + fine.f[:, 1::2])
    np.testing.assert_allclose(back, v.f, atol=1e-9)


def test_convergence_study_self_consistent(quadratic_problem, basis):
    state, v, grid, tg = solve_quadratic(quadratic_problem, 4, m0=4)
    meas = so.self_consistent_measurements(state)
    meas = so.Measurements(w=meas.w, mu=meas.mu, s_bar=meas.s_bar)
    cfg = so.OptimizerConfig(max_evals=30, step_min=1e-2, free_blocks=("g",))
    results = so.convergence_study(quadratic_problem, meas, [4, 8], cfg, v,
                                   basis=basis, m0_for=lambda n: n)
    assert [r.n for r in results] == [4, 8]
    for r in results:
        # never worse than the level's own starting point
        assert r.best_cost.total <= r.accepted_costs[0]
        assert np.isfinite(r.best_cost.total)
    assert len(study_gaps(results)) == 1


def test_study_levels_must_increase(quadratic_problem, basis):
    v = so.zero_control(4, 8, 3, s0=1.0)
    meas = _measurements_zero()
    cfg = so.OptimizerConfig(max_evals=5)
    with pytest.raises(InvalidArgumentError):
        so.convergence_study(quadratic_problem, meas, [8, 8], cfg, v, basis=basis)


def test_wrong_resolution_rejected(quadratic_problem, basis):
    v = so.zero_control(4, 8, 3, s0=1.0)
    cfg = so.OptimizerConfig(max_evals=5)
    with pytest.raises(InvalidArgumentError):
        so.minimize_level(quadratic_problem, _measurements_zero(), 8, cfg, v,
                          basis=basis)
