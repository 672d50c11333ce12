"""Steklov (cell and time-interval) averages of problem data.

Averages are the scheme's coefficient sampling rule: every function entering
the per-step linear systems does so through its mean over a space-time cell,
a time interval, or along the interpolated boundary curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import CoefficientBasis
from .errors import ConstraintViolationError, InvalidArgumentError, NumericError
from .grids import MovingGrid, TimeGrid
from .quadrature import cellwise_rule, integrate

_REL_TOL = 1e-8
_MAX_DOUBLINGS = 2


@dataclass(frozen=True)
class CellAverages:
    """Per-cell means indexed (i, k), i = spatial cell, k = 1..n time interval."""

    values: np.ndarray  # shape (n_cells, n_steps); column k-1 holds level k
    provenance: str

    def value(self, i: int, k: int) -> float:
        if k < 1:
            raise InvalidArgumentError(f"time level must be >= 1, got {k}")
        return float(self.values[i, k - 1])


def _tensor_means(fn, x_edges, t_edges, n_sub: int, n_pts: int) -> np.ndarray:
    xp, xw = cellwise_rule(x_edges, n_sub, n_pts)   # (nx, q)
    tp, tw = cellwise_rule(t_edges, n_sub, n_pts)   # (nt, q)
    shape = (xp.shape[0], xp.shape[1], tp.shape[0], tp.shape[1])
    X = np.broadcast_to(xp[:, :, None, None], shape)
    Tm = np.broadcast_to(tp[None, None, :, :], shape)
    vals = np.broadcast_to(np.asarray(fn(X, Tm), dtype=float), shape)
    acc = np.einsum("iqkr,iq,kr->ik", vals, xw, tw)
    area = np.outer(np.diff(x_edges), np.diff(t_edges))
    return acc / area


def function_cell_averages(d, grid: MovingGrid, time_grid: TimeGrid, *,
                           n_sub: int = 8, n_pts: int = 2,
                           rel_tol: float = _REL_TOL,
                           provenance: str = "function") -> CellAverages:
    """Cell averages of d(x, t) over every spatial cell x time interval.

    The composite Gauss rule is refined by doubling until the result is stable
    to ``rel_tol`` relatively.
    """
    x_edges = grid.xs
    t_edges = time_grid.nodes
    prev = _tensor_means(d, x_edges, t_edges, n_sub, n_pts)
    for level in range(1, _MAX_DOUBLINGS + 1):
        cur = _tensor_means(d, x_edges, t_edges, n_sub * 2**level, n_pts)
        if not np.all(np.isfinite(cur)):
            raise NumericError("non-finite values while averaging " + provenance)
        if np.max(np.abs(cur - prev)) <= rel_tol * (np.max(np.abs(cur)) + 1.0):
            return CellAverages(values=cur, provenance=provenance)
        prev = cur
    return CellAverages(values=prev, provenance=provenance)


def cell_average(d, grid: MovingGrid, time_grid: TimeGrid, i: int, k: int) -> float:
    """Mean of d over the single cell [x_i, x_{i+1}] x [t_{k-1}, t_k]."""
    if not (0 <= i < grid.n_cells) or not (1 <= k <= time_grid.n):
        raise InvalidArgumentError(f"cell ({i}, {k}) out of range")
    x_edges = grid.xs[i:i + 2]
    t_edges = time_grid.nodes[k - 1:k + 1]
    prev = _tensor_means(d, x_edges, t_edges, 8, 2)[0, 0]
    for level in range(1, _MAX_DOUBLINGS + 3):
        cur = _tensor_means(d, x_edges, t_edges, 8 * 2**level, 2)[0, 0]
        if not np.isfinite(cur):
            raise NumericError(f"non-finite value averaging over cell ({i}, {k})")
        if abs(cur - prev) <= 1e-10 * (abs(cur) + 1.0):
            return float(cur)
        prev = cur
    return float(prev)


def time_average(h, tau: float, k: int, *, t0: float | None = None) -> float:
    """Mean of h(t) over (t_{k-1}, t_k); t_{k-1} defaults to (k-1)*tau."""
    if k < 1:
        raise InvalidArgumentError(f"time level must be >= 1, got {k}")
    a = (k - 1) * tau if t0 is None else t0
    return integrate(h, a, a + tau) / tau


def time_averages_all(h, time_grid: TimeGrid, *, n_sub: int = 8, n_pts: int = 2,
                      rel_tol: float = _REL_TOL) -> np.ndarray:
    """Vector of time-interval means of h for k = 1..n."""
    edges = time_grid.nodes

    def means(sub):
        tp, tw = cellwise_rule(edges, sub, n_pts)
        return np.einsum("kq,kq->k", np.asarray(h(tp)) * np.ones_like(tp), tw) / np.diff(edges)

    prev = means(n_sub)
    for level in range(1, _MAX_DOUBLINGS + 1):
        cur = means(n_sub * 2**level)
        if np.max(np.abs(cur - prev)) <= rel_tol * (np.max(np.abs(cur)) + 1.0):
            return cur
        prev = cur
    return prev


def trace_averages(s_fn, chi, gamma, tau: float, k: int, *,
                   ell: float | None = None, t0: float | None = None,
                   s_derivative=None) -> tuple[float, float]:
    """Time means of chi(s(t), t) and gamma(s(t), t) * s'(t) over one interval.

    ``s_fn`` should be the boundary interpolant of a discrete control (which
    carries an analytic ``derivative``); a plain callable works if
    ``s_derivative`` is supplied.
    """
    a = (k - 1) * tau if t0 is None else t0
    ds = s_derivative if s_derivative is not None else getattr(s_fn, "derivative", None)
    if ds is None:
        raise InvalidArgumentError("boundary function must expose a derivative")

    def check_range(sv):
        if ell is not None and bool(np.any((sv < 0) | (sv > ell))):
            raise ConstraintViolationError("boundary leaves [0, ell] inside a time cell")
        return sv

    chi_k = integrate(lambda t: chi(check_range(s_fn(t)), t), a, a + tau) / tau
    gs_k = integrate(lambda t: gamma(check_range(s_fn(t)), t) * ds(t), a, a + tau) / tau
    return chi_k, gs_k


def trace_averages_all(s_fn, chi, gamma, time_grid: TimeGrid, *,
                       ell: float | None = None, s_derivative=None,
                       n_sub: int = 8, n_pts: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized trace averages for all k = 1..n."""
    ds = s_derivative if s_derivative is not None else getattr(s_fn, "derivative", None)
    if ds is None:
        raise InvalidArgumentError("boundary function must expose a derivative")
    tp, tw = cellwise_rule(time_grid.nodes, n_sub, n_pts)  # (n, q)
    sv = s_fn(tp)
    if ell is not None and bool(np.any((sv < 0) | (sv > ell))):
        raise ConstraintViolationError("boundary leaves [0, ell] inside a time cell")
    chi_k = np.einsum("kq,kq->k", np.asarray(chi(sv, tp)) * np.ones_like(tp), tw) / time_grid.tau
    gs_k = np.einsum("kq,kq->k", np.asarray(gamma(sv, tp) * ds(tp)) * np.ones_like(tp), tw) / time_grid.tau
    return chi_k, gs_k


def coefficient_cell_averages(d_coords, basis: CoefficientBasis, grid: MovingGrid,
                              time_grid: TimeGrid) -> CellAverages:
    """Cell averages of the basis expansion with coordinates ``d_coords``.

    Exact (cosine antiderivatives), and linear in the coordinates.
    """
    vals = basis.cell_averages(d_coords, grid.xs, time_grid.nodes)
    return CellAverages(values=vals, provenance="coefficient expansion")


def p_backward_x_difference(p_avgs: CellAverages, grid: MovingGrid, i: int, k: int) -> float:
    """Backward spatial difference (p_{ik} - p_{i-1,k}) / h_{i-1}."""
    if i < 1:
        raise InvalidArgumentError("backward difference needs i >= 1")
    return (p_avgs.value(i, k) - p_avgs.value(i - 1, k)) / grid.hs[i - 1]
