"""Discrete and fine-quadrature cost functionals with per-term breakdown."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import CoefficientBasis
from .controls import (BoundaryInterpolant, ContinuousControl, DiscreteControl,
                       is_admissible, sample_control)
from .errors import ConstraintViolationError, InvalidArgumentError
from .forward import DiscreteState, interpolations, run_forward
from .grids import build_time_grid
from .problem import ProblemData
from .quadrature import cellwise_rule, interval_rule
from .steklov import time_averages_all


@dataclass(frozen=True)
class Measurements:
    """Observed data: final temperature profile w, boundary temperature mu
    (zero outside [0, T]), and the measured final boundary position.

    ``w_cell`` and ``mu_avg`` optionally carry precomputed discrete values
    (cell averages of w on a specific grid, interval averages of mu); when
    present and of matching size they are used verbatim, which lets
    measurements generated from a discrete state reproduce a zero cost
    exactly.
    """

    w: object
    mu: object
    s_bar: float
    w_cell: np.ndarray | None = None
    mu_avg: np.ndarray | None = None

    def boundary_temperature(self, t):
        t = np.asarray(t, dtype=float)
        out = np.where((t >= 0), np.asarray(self.mu(t), dtype=float), 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class CostBreakdown:
    """The three cost terms before weighting, and their beta-weighted total."""

    term_final_temp: float
    term_boundary_temp: float
    term_final_position: float
    total: float
    weights: tuple[float, float, float]
    resolution: int | None = None

    def __post_init__(self):
        for name in ("term_final_temp", "term_boundary_temp", "term_final_position"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be nonnegative")


def _combine(t1: float, t2: float, t3: float, betas,
             resolution: int | None = None) -> CostBreakdown:
    b0, b1, b2 = betas
    return CostBreakdown(term_final_temp=t1, term_boundary_temp=t2,
                         term_final_position=t3,
                         total=b0 * t1 + b1 * t2 + b2 * t3,
                         weights=(float(b0), float(b1), float(b2)),
                         resolution=resolution)


def cell_averages_1d(fn, edges, *, n_sub: int = 16, n_pts: int = 4) -> np.ndarray:
    """Mean of fn over each cell of a 1-d partition."""
    pts, wts = cellwise_rule(np.asarray(edges, dtype=float), n_sub, n_pts)
    vals = np.asarray(fn(pts), dtype=float) * np.ones_like(pts)
    return np.einsum("iq,iq->i", vals, wts) / np.diff(edges)


def eval_discrete_cost(state: DiscreteState, v: DiscreteControl,
                       meas: Measurements, betas) -> CostBreakdown:
    """The discrete cost of a state: final-time cell sum, boundary-trace time
    sum, and the final boundary mismatch."""
    grid = state.grid
    n = state.n
    tau = state.time_grid.tau
    if v.s.size != n + 1 or not np.array_equal(v.s, grid.s):
        raise InvalidArgumentError("control boundary does not match the state grid")
    mn = grid.active_count(n)

    if meas.w_cell is not None and np.asarray(meas.w_cell).size >= mn:
        w_i = np.asarray(meas.w_cell, dtype=float)[:mn]
    else:
        w_i = cell_averages_1d(meas.w, grid.xs[:mn + 1])
    diff_w = state.u[n, :mn] - w_i
    t1 = float(np.dot(grid.hs[:mn], diff_w * diff_w))

    if meas.mu_avg is not None and np.asarray(meas.mu_avg).size == n:
        mu_k = np.asarray(meas.mu_avg, dtype=float)
    else:
        mu_k = time_averages_all(meas.boundary_temperature, state.time_grid)
    trace = state.boundary_values()[1:]
    diff_mu = trace - mu_k
    t2 = tau * float(np.dot(diff_mu, diff_mu))

    t3 = float((grid.s[n] - meas.s_bar) ** 2)
    return _combine(t1, t2, t3, betas)


def self_consistent_measurements(state: DiscreteState) -> Measurements:
    """Measurements whose discrete cost at the generating state is exactly zero."""
    grid = state.grid
    n = state.n
    mn = grid.active_count(n)
    itp = interpolations(state)
    final = state.level_interpolant(n)
    trace = state.boundary_values()[1:].copy()
    s_fn = BoundaryInterpolant(grid.s, state.time_grid.tau)

    def mu_fn(t):
        return itp.u_tau(s_fn(t), t)

    return Measurements(w=final, mu=mu_fn, s_bar=float(grid.s[n]),
                        w_cell=state.u[n, :mn].copy(), mu_avg=trace)


def eval_continuous_cost(v: ContinuousControl, data: ProblemData,
                         meas: Measurements, betas, fine_n: int,
                         basis: CoefficientBasis, *, m0: int | None = None,
                         n_sub: int = 8, n_pts: int = 4) -> CostBreakdown:
    """Fine-resolution proxy for the continuous cost: discretize the control
    at ``fine_n`` steps, solve, and integrate the interpolants."""
    time_grid = build_time_grid(data.T, fine_n)
    vd, grid = sample_control(v, time_grid, basis, ell=data.ell,
                              delta=data.delta, m0=m0)
    report = is_admissible(vd, data.R, data.delta, grid, time_grid.tau)
    if not report:
        raise ConstraintViolationError(
            "control is not admissible at the quadrature resolution: "
            + "; ".join(report.violations))
    state = run_forward(vd, data, grid, time_grid, basis)
    itp = interpolations(state)

    s_T = float(v.s(data.T))
    xp, xw = interval_rule(0.0, s_T, max(fine_n, 32), n_pts)
    diff_w = itp.u_hat_tau(xp, np.full_like(xp, data.T)) \
        - np.asarray(meas.w(xp), dtype=float) * np.ones_like(xp)
    t1 = float(np.dot(xw, diff_w * diff_w))

    tp, tw = interval_rule(0.0, data.T, max(fine_n, 32), n_pts)
    sv = np.asarray(v.s(tp), dtype=float) * np.ones_like(tp)
    diff_mu = itp.u_hat_tau(sv, tp) \
        - np.asarray(meas.boundary_temperature(tp), dtype=float) * np.ones_like(tp)
    t2 = float(np.dot(tw, diff_mu * diff_mu))

    t3 = float((s_T - meas.s_bar) ** 2)
    return _combine(t1, t2, t3, betas, resolution=fine_n)
