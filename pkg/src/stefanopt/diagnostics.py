"""Health indicators: energy functionals, weak-form residuals, and boundary
convergence gaps.

These report the raw quantities appearing on both sides of the scheme's
stability estimates so refinement studies can check boundedness of their
ratios, and quadrature residuals of the continuous weak identity evaluated on
the time-linear state interpolant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import ContinuousControl, DiscreteControl, norm_b2_1
from .errors import InvalidArgumentError, NumericError
from .forward import DiscreteState
from .problem import ProblemData
from .quadrature import cellwise_rule, interval_rule


# ---------------------------------------------------------------------------
# Energy functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyReport:
    lhs_first: float
    rhs_data_first: float
    lhs_second: float
    rhs_data_second: float
    n: int

    def __post_init__(self):
        for name in ("lhs_first", "rhs_data_first", "lhs_second", "rhs_data_second"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise NumericError(f"{name} is not a finite nonnegative number: {value}")


def first_energy_sides(state: DiscreteState, v: DiscreteControl,
                       data: ProblemData) -> tuple[float, float]:
    """Left side of the first stability estimate and the raw data functional
    on its right side (multiplicative constant excluded).

    The data side sums squared norms of the initial profile, the flux and
    source interpolants, the two boundary traces, and the indicator-weighted
    contribution of cells activated by an advancing boundary.
    """
    grid = state.grid
    tg = state.time_grid
    h = grid.hs
    u = state.u
    n = tg.n

    mass = np.einsum("ki,i->k", u[:, :-1] ** 2, h)
    ux = np.diff(u, axis=1) / h
    lhs = float(np.max(mass)) + tg.tau * float(np.einsum("ki,i->", ux[1:] ** 2, h))

    xp, xw = interval_rule(0.0, data.s0, 32, 4)
    phi_sq = float(np.dot(xw, np.asarray(data.phi(xp), dtype=float) ** 2 * np.ones_like(xp)))

    av = state.averages
    g_sq = tg.tau * float(np.dot(av.g_avg, av.g_avg))
    f_sq = tg.tau * float(np.einsum("ik,i->", av.f ** 2, h))
    trace_sq = tg.tau * (float(np.dot(av.gamma_sprime_avg, av.gamma_sprime_avg))
                         + float(np.dot(av.chi_avg, av.chi_avg)))

    activation = 0.0
    for k in range(1, n):
        if grid.s[k + 1] > grid.s[k]:
            lo, hi = grid.active_count(k), grid.active_count(k + 1)
            activation += float(np.dot(h[lo:hi], u[k, lo:hi] ** 2))

    return lhs, phi_sq + g_sq + f_sq + trace_sq + activation


def _constant_continuation(state: DiscreteState) -> np.ndarray:
    """State matrix with rows frozen at their boundary value beyond it."""
    u = np.array(state.u, copy=True)
    for k in range(state.n + 1):
        mk = state.grid.active_count(k)
        u[k, mk + 1:] = u[k, mk]
    return u


def second_energy_lhs(state: DiscreteState) -> float:
    """Left side of the second stability estimate, built on the constant
    continuation of the state beyond the boundary node."""
    grid = state.grid
    tau = state.time_grid.tau
    h = grid.hs
    ut = _constant_continuation(state)
    n = state.n

    term1 = 0.0
    term2 = 0.0
    term3 = 0.0
    for k in range(1, n + 1):
        mk = grid.active_count(k)
        hk = h[:mk]
        ux = np.diff(state.u[k, :mk + 1]) / hk
        term1 = max(term1, float(np.dot(hk, ux * ux)))
        dt = (ut[k, :mk] - ut[k - 1, :mk]) / tau
        term2 += float(np.dot(hk, dt * dt))
        dxt = (np.diff(ut[k, :mk + 1]) - np.diff(ut[k - 1, :mk + 1])) / (hk * tau)
        term3 += float(np.dot(hk, dxt * dxt))
    return term1 + tau * term2 + tau**2 * term3


def second_energy_rhs_data(state: DiscreteState, v: DiscreteControl,
                           data: ProblemData) -> float:
    """Raw data functional of the second estimate's right side.

    Fractional-order trace norms are replaced by their stronger first-order
    discrete surrogates, which is sufficient for boundedness checks.
    """
    tg = state.time_grid
    h = state.grid.hs
    av = state.averages
    xp, xw = interval_rule(0.0, data.s0, 32, 4)
    ones = np.ones_like(xp)
    phi_v = np.asarray(data.phi(xp), dtype=float) * ones
    step = 1e-6
    phi_x = (np.asarray(data.phi(xp + step), dtype=float)
             - np.asarray(data.phi(xp - step), dtype=float)) / (2 * step) * ones
    phi_b21 = float(np.dot(xw, phi_v**2 + phi_x**2))
    f_sq = tg.tau * float(np.einsum("ik,i->", av.f ** 2, h))
    g_sq = norm_b2_1(v.g, tg.tau) ** 2
    p_sq = tg.tau * float(np.einsum("ik,i->", av.p ** 2, h))

    def surrogate(vals):
        d = np.diff(vals) / tg.tau
        return tg.tau * (float(np.dot(vals, vals)) + float(np.dot(d, d)))

    return phi_b21 + f_sq + g_sq + p_sq \
        + surrogate(av.gamma_sprime_avg) + surrogate(av.chi_avg)


def energy_report(state: DiscreteState, v: DiscreteControl,
                  data: ProblemData) -> EnergyReport:
    lhs1, rhs1 = first_energy_sides(state, v, data)
    return EnergyReport(lhs_first=lhs1, rhs_data_first=rhs1,
                        lhs_second=second_energy_lhs(state),
                        rhs_data_second=second_energy_rhs_data(state, v, data),
                        n=state.n)


# ---------------------------------------------------------------------------
# Weak-form residual
# ---------------------------------------------------------------------------

def default_test_functions(T: float):
    """Tensor polynomials of total degree <= 3, plus one vanishing at t = T.

    Each entry is (name, phi, phi_x) with phi, phi_x functions of (x, t).
    """
    fns = []
    for a in range(4):
        for b in range(4 - a):
            fns.append((f"x^{a} t^{b}",
                        lambda x, t, a=a, b=b: x**a * t**b,
                        lambda x, t, a=a, b=b: (a * x**(a - 1) * t**b
                                                if a else np.zeros_like(np.asarray(x, dtype=float)))))
    fns.append(("x (T - t)",
                lambda x, t: np.asarray(x, dtype=float) * (T - np.asarray(t, dtype=float)),
                lambda x, t: (T - np.asarray(t, dtype=float)) * np.ones_like(np.asarray(x, dtype=float))))
    return fns


def weak_form_residuals(state: DiscreteState, v: ContinuousControl,
                        data: ProblemData, test_fns=None, *,
                        n_sub_t: int = 2, n_pts_t: int = 4,
                        n_sub_x: int = 8, n_pts_x: int = 4) -> np.ndarray:
    """Quadrature values of the continuous weak identity for each test
    function, using the time-linear interpolant of the state.

    The spatial integral runs over [0, s(t)] with s the continuous boundary
    of ``v``; the flux and trace line integrals are included.
    """
    if test_fns is None:
        test_fns = default_test_functions(data.T)
    tg = state.time_grid
    tau = tg.tau
    levels = [state.level_interpolant(k) for k in range(state.n + 1)]
    s_fn = v.s
    s_prime = getattr(s_fn, "derivative", None)
    if s_prime is None:
        raise InvalidArgumentError("continuous boundary must expose a derivative")

    totals = np.zeros(len(test_fns))
    tp_cells, tw_cells = cellwise_rule(tg.nodes, n_sub_t, n_pts_t)
    for k in range(1, state.n + 1):
        lev_lo, lev_hi = levels[k - 1], levels[k]
        for tq, tw in zip(tp_cells[k - 1], tw_cells[k - 1]):
            theta = (tq - tg.nodes[k - 1]) / tau
            s_t = float(s_fn(tq))
            xq, xw = interval_rule(0.0, s_t, n_sub_x, n_pts_x)
            u_lo, u_hi = lev_lo(xq), lev_hi(xq)
            ux_lo, ux_hi = lev_lo.derivative(xq), lev_hi.derivative(xq)
            u = u_lo + theta * (u_hi - u_lo)
            ux = ux_lo + theta * (ux_hi - ux_lo)
            ut = (u_hi - u_lo) / tau
            ones = np.ones_like(xq)
            a_v = np.asarray(data.a(xq, tq), dtype=float) * ones
            p_v = np.asarray(data.p(xq, tq), dtype=float) * ones
            b_v = np.asarray(v.b(xq, tq), dtype=float) * ones
            c_v = np.asarray(v.c(xq, tq), dtype=float) * ones
            f_v = np.asarray(v.f(xq, tq), dtype=float) * ones
            for j, (_, phi, phi_x) in enumerate(test_fns):
                ph = np.asarray(phi(xq, tq), dtype=float) * ones
                phx = np.asarray(phi_x(xq, tq), dtype=float) * ones
                integrand = (a_v * ux * phx - b_v * ux * ph - c_v * u * ph
                             + ut * ph + f_v * ph + p_v * phx)
                totals[j] += tw * float(np.dot(xw, integrand))

    tp, tw = interval_rule(0.0, data.T, max(4 * state.n, 32), 4)
    sv = np.asarray(s_fn(tp), dtype=float) * np.ones_like(tp)
    spv = np.asarray(s_prime(tp), dtype=float) * np.ones_like(tp)
    trace = (np.asarray(data.gamma(sv, tp), dtype=float) * spv
             - np.asarray(data.chi(sv, tp), dtype=float))
    gv = np.asarray(v.g(tp), dtype=float) * np.ones_like(tp)
    for j, (_, phi, _) in enumerate(test_fns):
        totals[j] += float(np.dot(tw, trace * (np.asarray(phi(sv, tp), dtype=float)
                                               * np.ones_like(tp))))
        totals[j] += float(np.dot(tw, gv * (np.asarray(phi(np.zeros_like(tp), tp),
                                                       dtype=float) * np.ones_like(tp))))
    if not np.all(np.isfinite(totals)):
        raise NumericError("weak-form quadrature produced non-finite values")
    return totals


def weak_form_residual(state: DiscreteState, v: ContinuousControl,
                       data: ProblemData, test_fns=None, **kwargs) -> float:
    """Largest absolute weak-identity residual over the test family."""
    return float(np.max(np.abs(weak_form_residuals(state, v, data, test_fns,
                                                   **kwargs))))


# ---------------------------------------------------------------------------
# Boundary convergence
# ---------------------------------------------------------------------------

def boundary_uniform_gap(boundaries, T: float, *, mesh: int = 1000) -> list[float]:
    """Sup-norm gaps between successive boundary interpolants on a fine mesh."""
    boundaries = list(boundaries)
    if len(boundaries) < 2:
        raise InvalidArgumentError("need at least two boundary functions")
    t = np.linspace(0.0, T, mesh)
    vals = [np.asarray(s(t), dtype=float) * np.ones_like(t) for s in boundaries]
    return [float(np.max(np.abs(b - a))) for a, b in zip(vals, vals[1:])]
