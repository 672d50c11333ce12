"""Acceptance gate: one test per release criterion.

Each test prints a single ``criterion k: PASS/FAIL`` line (visible with
``pytest -s`` or in captured output on failure) and then asserts.  The
manufactured problem used throughout is the fixed-boundary solution
u = x^2 + 2t with unit diffusion, zero convection/reaction/source.
"""

import time

import numpy as np
import pytest

import stefanopt as so
from stefanopt.cli import main
from stefanopt.forward import (StateInterpolations, assemble_step,
                               compute_averages, solve_step)
from stefanopt.quadrature import interval_rule

from conftest import solve_quadratic

STUDY_CONFIG = """
[problem]
a = "1"
p = "0"
gamma = "0"
chi = "0"
phi = "0"
mu = "0"
w = "0.1"
s0 = 1.0
T = 1.0
ell = 2.0
delta = 0.25
R = 10.0
s_bar = 1.0

[discretization]
n = 4
levels = [4, 8]
m0 = 4

[controls]
g = "optimize"

[optimizer]
max_evals = 40
step_min = 0.01
seed = 3
"""


def _report(k: int, ok: bool, detail: str):
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {k}: {detail}"


def _l2_error(state, n: int) -> float:
    """L2(Omega) distance between the time-linear interpolant and x^2 + 2t."""
    itp = StateInterpolations(state)
    tp, tw = interval_rule(0.0, 1.0, n, 3)
    xp, xw = interval_rule(0.0, 1.0, n, 3)
    total = 0.0
    for t, wt in zip(tp, tw):
        diff = itp.u_hat_tau(xp, np.full_like(xp, t)) - (xp**2 + 2.0 * t)
        total += wt * float(np.dot(xw, diff**2))
    return float(np.sqrt(total))


def test_criterion_1_identity_residual(quadratic_problem):
    start = time.perf_counter()
    worst = 0.0
    for n in (8, 16, 32, 64):
        state, *_ = solve_quadratic(quadratic_problem, n)
        worst = max(worst, so.max_identity_residual(state))
    # a moving boundary exercises the variable active range
    n = 16
    tg = so.build_time_grid(1.0, n)
    s = 1.0 + 0.2 * tg.nodes
    s[0] = s[1]
    grid = so.build_moving_grid(s, ell=2.0, delta=0.25, m0=16)
    v = so.zero_control(n, grid.n_cells, 3, s0=1.0).with_block("s", s)
    v = v.with_block("g", 0.3 * np.ones(n + 1))
    state = so.run_forward(v, quadratic_problem, grid, tg)
    worst = max(worst, so.max_identity_residual(state))
    elapsed = time.perf_counter() - start
    _report(1, worst <= 1e-9 and elapsed < 5.0,
            f"max scaled residual {worst:.3e}, {elapsed:.2f} s")


def test_criterion_2_dense_equivalence(quadratic_problem):
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(3, 201))
        lower = rng.uniform(-1, 1, m)
        upper = rng.uniform(-1, 1, m)
        diag = np.abs(lower) + np.abs(upper) + rng.uniform(0.5, 2.0, m)
        diag *= rng.choice([-1.0, 1.0], m)
        sys = so.TridiagonalSystem(lower=lower, diag=diag, upper=upper,
                                   rhs=rng.uniform(-1, 1, m))
        worst = max(worst, float(np.max(np.abs(
            solve_step(sys) - np.linalg.solve(sys.dense(), sys.rhs)))))
    # full forward run at n = 16: every implicit step against dense elimination
    state, v, grid, tg = solve_quadratic(quadratic_problem, 16)
    av = compute_averages(v, quadratic_problem, grid, tg)
    for k in range(1, 17):
        sys = assemble_step(k, state.u[k - 1], grid, tg.tau, av)
        dense = np.linalg.solve(sys.dense(), sys.rhs)
        worst = max(worst, float(np.max(np.abs(
            state.u[k, :dense.size] - dense))))
    _report(2, worst <= 1e-10, f"max banded-vs-dense gap {worst:.3e}")


def test_criterion_3_manufactured_convergence(quadratic_problem):
    start = time.perf_counter()
    errors = {}
    for n in (16, 32, 64):
        state, *_ = solve_quadratic(quadratic_problem, n)
        errors[n] = _l2_error(state, n)
    r16 = errors[16] / errors[32]
    r32 = errors[32] / errors[64]
    elapsed = time.perf_counter() - start
    _report(3, r16 >= 1.5 and r32 >= 1.5 and elapsed < 30.0,
            f"errors {errors[16]:.3e}/{errors[32]:.3e}/{errors[64]:.3e}, "
            f"ratios {r16:.2f}, {r32:.2f}, {elapsed:.1f} s")


def test_criterion_4_energy_boundedness(quadratic_problem):
    first, second = [], []
    for n in (16, 32, 64):
        state, v, grid, tg = solve_quadratic(quadratic_problem, n)
        first.append(so.first_energy_sides(state, v, quadratic_problem)[0])
        second.append(so.second_energy_lhs(state))
    ratios = [first[1] / first[0], first[2] / first[1],
              second[1] / second[0], second[2] / second[1]]
    _report(4, max(ratios) <= 1.5,
            "lhs growth factors " + ", ".join(f"{r:.3f}" for r in ratios))


def test_criterion_5_identification_study(zero_problem):
    start = time.perf_counter()
    data = zero_problem
    basis = so.CoefficientBasis(size=3, ell=2.0, T=1.0)
    m0_for = lambda n: max(4, n // 4)

    # synthetic measurements: fine forward solve with the target flux g = 1
    n_fine = 64
    tg = so.build_time_grid(1.0, n_fine)
    grid = so.build_moving_grid(np.ones(n_fine + 1), ell=2.0, delta=0.25,
                                m0=m0_for(n_fine))
    truth = so.zero_control(n_fine, grid.n_cells, 3, s0=1.0)
    truth = truth.with_block("g", np.ones(n_fine + 1))
    fine_state = so.run_forward(truth, data, grid, tg)
    meas = so.self_consistent_measurements(fine_state)
    meas = so.Measurements(w=meas.w, mu=meas.mu, s_bar=meas.s_bar)

    levels = [8, 16, 32]
    init = so.zero_control(8, so.build_moving_grid(
        np.ones(9), ell=2.0, delta=0.25, m0=m0_for(8)).n_cells, 3, s0=1.0)
    cfg = so.OptimizerConfig(method="fd-projected-gradient", max_evals=3000,
                             step_init=0.5, step_min=1e-6, fd_epsilon=1e-5,
                             free_blocks=("g",), seed=0)
    results = so.convergence_study(data, meas, levels, cfg, init,
                                   basis=basis, m0_for=m0_for)
    costs = [r.best_cost.total for r in results]

    # baseline: cost of the zero initial guess at the finest level
    g32 = so.build_moving_grid(np.ones(33), ell=2.0, delta=0.25, m0=m0_for(32))
    z32 = so.zero_control(32, g32.n_cells, 3, s0=1.0)
    zero_state = so.run_forward(z32, data, g32, so.build_time_grid(1.0, 32))
    baseline = so.eval_discrete_cost(zero_state, z32, meas, data.betas).total

    elapsed = time.perf_counter() - start
    nonincreasing = costs[0] >= costs[1] >= costs[2]
    cauchy = abs(costs[2] - costs[1]) <= abs(costs[1] - costs[0])
    reduced = costs[2] <= 1e-3 * baseline
    _report(5, nonincreasing and cauchy and reduced and elapsed < 300.0,
            f"I* = {costs[0]:.3e}/{costs[1]:.3e}/{costs[2]:.3e}, "
            f"baseline {baseline:.3e}, {elapsed:.0f} s")


def test_criterion_6_self_consistency(quadratic_problem):
    state, v, grid, tg = solve_quadratic(quadratic_problem, 16)
    meas = so.self_consistent_measurements(state)
    total = so.eval_discrete_cost(state, v, meas, (1.0, 1.0, 1.0)).total
    _report(6, total <= 1e-12, f"cost at generating control {total:.3e}")


def test_criterion_7_mapping_properties():
    R, delta, ell, T = 10.0, 0.25, 2.0, 1.0
    basis = so.CoefficientBasis(size=6, ell=ell, T=T)
    rng = np.random.default_rng(7)
    threshold = 8
    all_ok = True
    max_norm = 0.0
    for _ in range(20):
        alpha = rng.uniform(-0.02, 0.02, 3)
        beta = rng.uniform(-0.3, 0.3, 3)
        theta_b = rng.normal(size=6)
        theta_b *= rng.uniform(0.1, 1.0) / np.linalg.norm(theta_b)
        theta_c = rng.normal(size=6)
        theta_c *= rng.uniform(0.1, 1.0) / np.linalg.norm(theta_c)
        theta_f = 0.5 * rng.normal(size=6)

        def s_fn(t, alpha=alpha):
            t = np.asarray(t, dtype=float)
            out = np.ones_like(t)
            for j, a in enumerate(alpha, start=1):
                out = out + a * (np.cos(j * np.pi * t / T) - 1.0)
            return out

        def g_fn(t, beta=beta):
            t = np.asarray(t, dtype=float)
            out = np.zeros_like(t)
            for j, b in enumerate(beta, start=1):
                out = out + b * np.cos(j * np.pi * t / T)
            return out

        cont = so.ContinuousControl(s=s_fn, g=g_fn,
                                    f=basis.expansion(theta_f),
                                    b=basis.expansion(theta_b),
                                    c=basis.expansion(theta_c))
        for n in (threshold, 16, 32):
            tg = so.build_time_grid(T, n)
            v, grid = so.sample_control(cont, tg, basis, ell=ell, delta=delta)
            rep = so.is_admissible(v, R, delta, grid, tg.tau)
            all_ok = all_ok and rep.ok
            max_norm = max(max_norm, rep.norm)

    # Parseval under the inner product the basis is orthonormal in
    theta = rng.normal(size=6)
    gram = basis.gram_matrix(n_sub=48, n_pts=4)
    parseval_gap = abs(float(theta @ gram @ theta) - float(theta @ theta))

    # L2 norm consistency: the quadrature L2 norm of each basis function
    # matches the closed form from its cosine factors
    xp, xw = interval_rule(0.0, ell, 48, 4)
    tp, tw = interval_rule(0.0, T, 48, 4)
    X, Tm = np.meshgrid(xp, tp, indexing="ij")
    W = np.outer(xw, tw)
    l2_gap = 0.0
    for k, (i, j) in enumerate(basis.degrees):
        amp = float(basis.evaluate(k, 0.0, 0.0))
        exact = amp**2 * (ell if i == 0 else ell / 2) * (T if j == 0 else T / 2)
        numeric = float(np.sum(W * basis.evaluate(k, X, Tm) ** 2))
        l2_gap = max(l2_gap, abs(numeric - exact))

    _report(7, all_ok and parseval_gap <= 1e-8 and l2_gap <= 1e-8,
            f"20 controls admissible for n >= {threshold} (max norm "
            f"{max_norm:.3f} <= R), Parseval gap {parseval_gap:.2e}, "
            f"L2 gap {l2_gap:.2e}")


def test_criterion_8_lipschitz_boundary():
    R, delta, ell, s0, T = 10.0, 0.25, 2.0, 1.0, 1.0
    bound = so.lipschitz_bound(R, T)
    rng = np.random.default_rng(8)
    worst = 0.0
    checked = 0
    for n in (8, 16, 32):
        tau = T / n
        for _ in range(20):
            s_raw = s0 + rng.uniform(-2.0, 2.0, n + 1)
            v = so.zero_control(n, 4, 3, s0=s0).with_block("s", s_raw)
            grid0 = so.build_moving_grid(np.full(n + 1, s0), ell=ell,
                                         delta=delta, m0=4)
            v = v.with_block("f", np.zeros((grid0.n_cells, n)))
            proj, grid = so.project_admissible(v, R=R, delta=delta, ell=ell,
                                               s0=s0, tau=tau, m0=4,
                                               f_grid=grid0)
            assert so.is_admissible(proj, R, delta, grid, tau).ok
            worst = max(worst, float(np.max(np.abs(np.diff(proj.s)))) / tau)
            checked += 1
    _report(8, worst <= bound,
            f"{checked} admissible controls, max |ds|/tau {worst:.3f} "
            f"<= C' = {bound:.3f}")


def test_criterion_9_weak_residual_decay(quadratic_problem):
    basis = so.CoefficientBasis(size=3, ell=2.0, T=1.0)
    residuals = {}
    for n in (8, 16, 32):
        state, v, grid, tg = solve_quadratic(quadratic_problem, n)
        cont = so.interpolate_control(v, tg, grid, basis)
        residuals[n] = so.weak_form_residual(state, cont, quadratic_problem)
    f1 = residuals[16] / residuals[8]
    f2 = residuals[32] / residuals[16]
    ok = 0.375 <= f1 <= 0.625 and 0.375 <= f2 <= 0.625
    _report(9, ok, f"residuals {residuals[8]:.3e}/{residuals[16]:.3e}/"
                   f"{residuals[32]:.3e}, decay factors {f1:.3f}, {f2:.3f}")


def test_criterion_10_deterministic_study(tmp_path):
    cfg_path = tmp_path / "config.toml"
    cfg_path.write_text(STUDY_CONFIG, encoding="utf-8")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    code1 = main(["study", "--config", str(cfg_path), "--out", str(out1),
                  "--seed", "11"])
    code2 = main(["study", "--config", str(cfg_path), "--out", str(out2),
                  "--seed", "11"])
    same = (out1 / "convergence.csv").read_bytes() \
        == (out2 / "convergence.csv").read_bytes()
    _report(10, code1 == 0 and code2 == 0 and same,
            "repeated study runs produced byte-identical convergence.csv")
