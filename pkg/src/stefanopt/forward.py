"""Per-step tridiagonal stepping for the moving-boundary state problem.

Each time level solves an (m_j + 1)-equation tridiagonal system whose rows
are the summation identity tested with the canonical basis vectors: a flux
row at x = 0, conservative interior rows with the mixed cell widths h_i and
h_{i-1}, and a trace row at the boundary node.  Values beyond the boundary
node are filled by iterated even reflection so that the full state matrix is
defined on all of [0, ell].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import CoefficientBasis
from .controls import BoundaryInterpolant, DiscreteControl
from .errors import InvalidArgumentError, SingularSystemError
from .grids import MovingGrid, TimeGrid
from .problem import ProblemData
from .steklov import (coefficient_cell_averages, function_cell_averages,
                      trace_averages_all)

_RESIDUAL_REL_TOL = 1e-10


# ---------------------------------------------------------------------------
# Per-level data averages
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevelAverages:
    """All cell and interval averages the stepping needs, for every level.

    The cell matrices have shape (n_cells, n); column k-1 holds level k.
    ``g_avg``, ``chi_avg`` and ``gamma_sprime_avg`` have length n with the
    same offset.
    """

    a: np.ndarray
    p: np.ndarray
    f: np.ndarray
    b: np.ndarray
    c: np.ndarray
    g_avg: np.ndarray
    chi_avg: np.ndarray
    gamma_sprime_avg: np.ndarray


def compute_averages(v: DiscreteControl, data: ProblemData, grid: MovingGrid,
                     time_grid: TimeGrid, basis: CoefficientBasis | None = None) -> LevelAverages:
    """Average the given data and the control blocks over the grid cells.

    The flux enters through the mean of its piecewise-linear interpolant over
    each time interval, which is the midpoint value (g_{k-1} + g_k) / 2.
    """
    if v.f.shape != (grid.n_cells, time_grid.n):
        raise InvalidArgumentError(
            f"source matrix shape {v.f.shape} does not match grid "
            f"({grid.n_cells} cells, {time_grid.n} steps)")
    a_avg = function_cell_averages(data.a, grid, time_grid, provenance="diffusion").values
    p_avg = function_cell_averages(data.p, grid, time_grid, provenance="pressure").values
    if basis is None:
        if np.any(v.b != 0.0) or np.any(v.c != 0.0):
            raise InvalidArgumentError("nonzero coefficient blocks need a basis")
        b_avg = np.zeros_like(a_avg)
        c_avg = np.zeros_like(a_avg)
    else:
        b_avg = coefficient_cell_averages(v.b, basis, grid, time_grid).values
        c_avg = coefficient_cell_averages(v.c, basis, grid, time_grid).values
    g_avg = 0.5 * (v.g[:-1] + v.g[1:])
    s_fn = BoundaryInterpolant(v.s, time_grid.tau)
    chi_avg, gs_avg = trace_averages_all(s_fn, data.chi, data.gamma, time_grid,
                                         ell=data.ell)
    return LevelAverages(a=a_avg, p=p_avg, f=np.asarray(v.f, dtype=float),
                         b=b_avg, c=c_avg, g_avg=g_avg, chi_avg=chi_avg,
                         gamma_sprime_avg=gs_avg)


# ---------------------------------------------------------------------------
# Assembly and solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TridiagonalSystem:
    """Bands and right side of one per-level system; lower[0] and upper[-1] unused."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    @property
    def size(self) -> int:
        return self.diag.size

    def dense(self) -> np.ndarray:
        A = np.diag(self.diag)
        A += np.diag(self.lower[1:], -1)
        A += np.diag(self.upper[:-1], 1)
        return A

    def dominance_margin(self) -> np.ndarray:
        off = np.abs(self.upper) + np.abs(self.lower)
        off[0] = abs(self.upper[0])
        off[-1] = abs(self.lower[-1])
        return np.abs(self.diag) - off


def assemble_step(k: int, u_prev, grid: MovingGrid, tau: float,
                  av: LevelAverages) -> TridiagonalSystem:
    """Build the level-k system for the active nodes 0..m_k.

    Row i is the summation identity tested with the canonical vector e_i and
    scaled by (-h_0), (h_i h_{i-1}) or (h_{m-1}) respectively, which makes the
    bands match the conventional displayed form of the scheme.
    """
    if not (1 <= k <= grid.n_levels):
        raise InvalidArgumentError(f"time level {k} out of range 1..{grid.n_levels}")
    mk = grid.active_count(k)
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.size < mk + 1:
        raise InvalidArgumentError(
            f"previous row has {u_prev.size} entries, level {k} needs {mk + 1}")
    h = grid.hs
    col = k - 1
    a, b, c = av.a[:, col], av.b[:, col], av.c[:, col]
    f, p = av.f[:, col], av.p[:, col]

    lower = np.zeros(mk + 1)
    diag = np.empty(mk + 1)
    upper = np.zeros(mk + 1)
    rhs = np.empty(mk + 1)

    h0 = h[0]
    diag[0] = a[0] + h0 * b[0] - h0**2 * c[0] + h0**2 / tau
    upper[0] = -(a[0] + h0 * b[0])
    rhs[0] = (h0**2 / tau) * u_prev[0] - h0**2 * f[0] - h0 * av.g_avg[col] + h0 * p[0]

    if mk > 1:
        i = np.arange(1, mk)
        hi, hm = h[i], h[i - 1]
        lower[1:mk] = -a[i - 1] * hi
        diag[1:mk] = a[i - 1] * hi + a[i] * hm + b[i] * hi * hm \
            - c[i] * hi**2 * hm + hi**2 * hm / tau
        upper[1:mk] = -(a[i] * hm + b[i] * hi * hm)
        rhs[1:mk] = -hi**2 * hm * f[i] + hi * hm * (p[i] - p[i - 1]) \
            + (hi**2 * hm / tau) * u_prev[i]

    hl = h[mk - 1]
    lower[mk] = -a[mk - 1]
    diag[mk] = a[mk - 1]
    rhs[mk] = -hl * (av.gamma_sprime_avg[col] - av.chi_avg[col]) - hl * p[mk - 1]

    return TridiagonalSystem(lower=lower, diag=diag, upper=upper, rhs=rhs)


def check_dominance(sys: TridiagonalSystem, level: int | None = None) -> None:
    """Require strict diagonal dominance on all rows except the trace row,
    where equality is structural."""
    margin = sys.dominance_margin()
    bad = np.flatnonzero(margin[:-1] <= 0)
    tiny = 1e-14 * np.max(np.abs(sys.diag))
    if bad.size or margin[-1] < -tiny:
        row = int(bad[0]) if bad.size else sys.size - 1
        where = f" at level {level}" if level is not None else ""
        raise SingularSystemError(
            f"diagonal dominance lost in row {row}{where}; "
            "the time step is too large for these coefficients, halve tau",
            level=level)


def solve_step(sys: TridiagonalSystem) -> np.ndarray:
    """Solve the banded system and verify the residual against the right side."""
    ab = np.zeros((3, sys.size))
    ab[0, 1:] = sys.upper[:-1]
    ab[1] = sys.diag
    ab[2, :-1] = sys.lower[1:]
    try:
        u = scipy.linalg.solve_banded((1, 1), ab, sys.rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"banded solve failed: {exc}") from exc
    resid = sys.dense() @ u - sys.rhs
    bound = _RESIDUAL_REL_TOL * (np.max(np.abs(sys.rhs)) + 1.0)
    if not np.all(np.isfinite(u)) or np.max(np.abs(resid)) > bound:
        raise SingularSystemError(
            f"solve residual {np.max(np.abs(resid)):.3e} exceeds {bound:.3e}")
    return u


# ---------------------------------------------------------------------------
# Reflection extension
# ---------------------------------------------------------------------------

class ReflectedInterpolant:
    """Piecewise-linear interpolant on [0, s_k], continued to [0, ell] by
    iterated even reflection about the dyadic multiples 2^nu * s_k."""

    def __init__(self, xs_active, u_active, s_k: float, ell: float):
        self.xs = np.asarray(xs_active, dtype=float)
        self.u = np.asarray(u_active, dtype=float)
        self.s_k = float(s_k)
        self.ell = float(ell)
        if self.xs.size != self.u.size or self.xs.size < 2:
            raise InvalidArgumentError("need matching node and value vectors, length >= 2")
        self.max_folds = 2 + max(0, math.ceil(math.log2(max(ell / self.s_k, 1.0) + 1e-300)))

    def fold(self, x):
        """Map points of [0, ell] into [0, s_k] by the reflection rule."""
        return self.fold_with_sign(x)[0]

    def fold_with_sign(self, x):
        """Folded points together with the orientation (-1 per reflection)."""
        y = np.array(x, dtype=float, copy=True)
        sign = np.ones_like(y)
        s = self.s_k
        for _ in range(self.max_folds):
            mask = y > s
            if not np.any(mask):
                break
            nu = np.ceil(np.log2(y[mask] / s))
            y[mask] = np.exp2(nu) * s - y[mask]
            sign[mask] = -sign[mask]
        return np.clip(y, 0.0, s), sign

    def __call__(self, x):
        y = self.fold(x)
        out = np.interp(y, self.xs, self.u)
        return out if out.ndim else float(out)

    def derivative(self, x):
        """Exact piecewise slope of the extension (chain rule through folds)."""
        y, sign = self.fold_with_sign(x)
        slopes = np.diff(self.u) / np.diff(self.xs)
        i = np.clip(np.searchsorted(self.xs, y, side="right") - 1, 0, slopes.size - 1)
        out = sign * slopes[i]
        return out if out.ndim else float(out)


def reflect_extend(xs_active, u_active, s_k: float, ell: float) -> ReflectedInterpolant:
    """Even-reflection continuation of nodal values on [0, s_k] to [0, ell]."""
    return ReflectedInterpolant(xs_active, u_active, s_k, ell)


# ---------------------------------------------------------------------------
# The forward run
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteState:
    """State matrix over the full grid; row k holds level k at every node."""

    u: np.ndarray
    grid: MovingGrid
    time_grid: TimeGrid
    control: DiscreteControl
    averages: LevelAverages

    def __post_init__(self):
        self.u.setflags(write=False)

    @property
    def n(self) -> int:
        return self.time_grid.n

    def active_count(self, k: int) -> int:
        return self.grid.active_count(k)

    def level_interpolant(self, k: int) -> ReflectedInterpolant:
        mk = self.grid.active_count(k)
        return reflect_extend(self.grid.xs[:mk + 1], self.u[k, :mk + 1],
                              self.grid.s[k], self.grid.ell)

    def boundary_values(self) -> np.ndarray:
        """u at the boundary node of each level, k = 0..n."""
        return self.u[np.arange(self.n + 1), self.grid.m]


def run_forward(v: DiscreteControl, data: ProblemData, grid: MovingGrid,
                time_grid: TimeGrid, basis: CoefficientBasis | None = None,
                averages: LevelAverages | None = None) -> DiscreteState:
    """Step the scheme over all levels and return the full state matrix.

    Row 0 evaluates the initial temperature at the active nodes; every row is
    completed beyond its boundary node by the reflection extension, which also
    supplies previous-level values at newly activated nodes.
    """
    if averages is None:
        averages = compute_averages(v, data, grid, time_grid, basis)
    n = time_grid.n
    N = grid.n_cells
    u = np.empty((n + 1, N + 1))

    m0 = grid.active_count(0)
    u[0, :m0 + 1] = data.phi(grid.xs[:m0 + 1])
    _complete_row(u[0], grid, 0)

    for k in range(1, n + 1):
        sys = assemble_step(k, u[k - 1], grid, time_grid.tau, averages)
        check_dominance(sys, level=k)
        mk = grid.active_count(k)
        u[k, :mk + 1] = solve_step(sys)
        _complete_row(u[k], grid, k)

    return DiscreteState(u=u, grid=grid, time_grid=time_grid, control=v,
                         averages=averages)


def _complete_row(row, grid: MovingGrid, k: int) -> None:
    mk = grid.active_count(k)
    if mk < grid.n_cells:
        refl = reflect_extend(grid.xs[:mk + 1], row[:mk + 1], grid.s[k], grid.ell)
        row[mk + 1:] = refl(grid.xs[mk + 1:])


# ---------------------------------------------------------------------------
# Interpolations of the state
# ---------------------------------------------------------------------------

class StateInterpolations:
    """The three space-time interpolants of a discrete state.

    ``u_tau`` is piecewise constant in time (right-continuous from the left:
    level k on t_{k-1} < t <= t_k), ``u_hat_tau`` is linear in time between
    spatial interpolants and frozen at the final level for t >= T, and
    ``u_tilde`` is constant on every grid cell x time interval.
    """

    def __init__(self, state: DiscreteState):
        self.state = state
        self.tau = state.time_grid.tau
        self._levels = [state.level_interpolant(k) for k in range(state.n + 1)]

    def _level_index(self, t) -> np.ndarray:
        n = self.state.n
        t = np.asarray(t, dtype=float)
        return np.clip(np.ceil(t / self.tau - 1e-12).astype(int), 0, n)

    def u_tau(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x_b, t_b = np.broadcast_arrays(x, t)
        k = self._level_index(t_b)
        out = np.empty(k.shape)
        for kv in np.unique(k):
            mask = k == kv
            out[mask] = self._levels[kv](x_b[mask])
        return out if out.ndim else float(out)

    def u_hat_tau(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x_b, t_b = np.broadcast_arrays(x, t)
        k = np.clip(np.ceil(t_b / self.tau - 1e-12).astype(int), 1, self.state.n)
        dt = np.clip(t_b - (k - 1) * self.tau, 0.0, self.tau)
        lo = np.empty(k.shape)
        hi = np.empty(k.shape)
        for kv in np.unique(k):
            mask = k == kv
            lo[mask] = self._levels[kv - 1](x_b[mask])
            hi[mask] = self._levels[kv](x_b[mask])
        out = lo + (hi - lo) * (dt / self.tau)
        return out if out.ndim else float(out)

    def u_tilde(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        x_b, t_b = np.broadcast_arrays(x, t)
        k = np.clip(np.ceil(t_b / self.tau - 1e-12).astype(int), 1, self.state.n)
        xs = self.state.grid.xs
        i = np.clip(np.searchsorted(xs, x_b, side="right") - 1, 0, xs.size - 2)
        out = self.state.u[k, i]
        return out if out.ndim else float(out)


def interpolations(state: DiscreteState) -> StateInterpolations:
    """The piecewise-constant, time-linear and cell-constant interpolants."""
    return StateInterpolations(state)


# ---------------------------------------------------------------------------
# Summation identity
# ---------------------------------------------------------------------------

def summation_identity_terms(state: DiscreteState, k: int, eta) -> tuple[float, float]:
    """Left side of the per-level summation identity and a scale for it.

    Returns (value, scale) where scale is the sum of absolute values of the
    aggregated terms, for relative residual checks.
    """
    if k < 1 or k > state.n:
        raise InvalidArgumentError(f"time level {k} out of range 1..{state.n}")
    grid = state.grid
    av = state.averages
    tau = state.time_grid.tau
    mk = grid.active_count(k)
    eta = np.asarray(eta, dtype=float)
    if eta.size != mk + 1:
        raise InvalidArgumentError(f"test vector needs length {mk + 1}, got {eta.size}")
    h = grid.hs[:mk]
    col = k - 1
    u_k = state.u[k, :mk + 1]
    u_prev = state.u[k - 1, :mk + 1]
    ux = np.diff(u_k) / h
    etax = np.diff(eta) / h
    ut = (u_k[:mk] - u_prev[:mk]) / tau
    a, b, c = av.a[:mk, col], av.b[:mk, col], av.c[:mk, col]
    f, p = av.f[:mk, col], av.p[:mk, col]
    e = eta[:mk]
    pieces = np.array([
        float(np.dot(h, a * ux * etax)),
        float(np.dot(h, -b * ux * e)),
        float(np.dot(h, -c * u_k[:mk] * e)),
        float(np.dot(h, f * e)),
        float(np.dot(h, p * etax)),
        float(np.dot(h, ut * e)),
        (av.gamma_sprime_avg[col] - av.chi_avg[col]) * eta[mk],
        av.g_avg[col] * eta[0],
    ])
    return float(pieces.sum()), float(np.abs(pieces).sum())


def summation_identity_residual(state: DiscreteState, k: int, eta) -> float:
    """Value of the level-k summation identity tested with ``eta`` (zero for
    an exactly solved state, up to solver roundoff)."""
    return summation_identity_terms(state, k, eta)[0]


def max_identity_residual(state: DiscreteState) -> float:
    """Max over all levels and canonical test vectors of the scaled residual."""
    worst = 0.0
    for k in range(1, state.n + 1):
        mk = state.grid.active_count(k)
        eye = np.eye(mk + 1)
        for i in range(mk + 1):
            value, scale = summation_identity_terms(state, k, eye[i])
            worst = max(worst, abs(value) / max(scale, 1e-300))
    return worst
