"""Control vectors, discrete norms, admissibility, and the discretization maps.

A control bundles the free boundary s, the fixed-boundary flux g, the source
density f, and the convection/reaction coefficient blocks b, c.  The discrete
admissible set is defined by componentwise boundary constraints together with
a cap R on the maximum of five discrete norms.  ``sample_control`` (continuous
to discrete) and ``interpolate_control`` (discrete to continuous) implement
the two mappings whose set inclusions are exercised in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .basis import CoefficientBasis
from .errors import ConstraintViolationError, InvalidArgumentError
from .grids import MovingGrid, TimeGrid, build_moving_grid, default_m0
from .steklov import function_cell_averages


# ---------------------------------------------------------------------------
# Control containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContinuousControl:
    """Control with function-valued components: s(t), g(t), f/b/c on D."""

    s: object
    g: object
    f: object
    b: object
    c: object


@dataclass(frozen=True)
class DiscreteControl:
    """Discrete control: boundary and flux vectors (length n+1), cell-constant
    source matrix (n_cells x n), and coefficient coordinates for b and c."""

    s: np.ndarray
    g: np.ndarray
    f: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("s", "g", "f", "b", "c"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.s.size - 1

    def with_block(self, name: str, value) -> "DiscreteControl":
        return replace(self, **{name: np.asarray(value, dtype=float)})


def zero_control(n: int, n_cells: int, n_coeff: int | None = None, *,
                 s0: float = 1.0) -> DiscreteControl:
    """All-zero control blocks over a constant boundary at ``s0``."""
    k = n + 1 if n_coeff is None else n_coeff
    return DiscreteControl(s=np.full(n + 1, float(s0)), g=np.zeros(n + 1),
                           f=np.zeros((n_cells, n)), b=np.zeros(k), c=np.zeros(k))


# ---------------------------------------------------------------------------
# Discrete norms
# ---------------------------------------------------------------------------

def norm_b2_1(g, tau: float) -> float:
    """sqrt( sum_{k<n} tau g_k^2 + sum_{k>=1} tau ((g_k - g_{k-1})/tau)^2 )."""
    g = np.asarray(g, dtype=float)
    if g.size < 2:
        raise InvalidArgumentError("first-order discrete norm needs length >= 2")
    diff = np.diff(g) / tau
    return math.sqrt(tau * float(np.dot(g[:-1], g[:-1])) + tau * float(np.dot(diff, diff)))


def norm_b2_2(s, tau: float) -> float:
    """First-order norm plus the tau-weighted second-difference sum."""
    s = np.asarray(s, dtype=float)
    if s.size < 3:
        raise InvalidArgumentError("second-order discrete norm needs length >= 3")
    second = np.diff(s, 2) / tau**2
    return math.sqrt(norm_b2_1(s, tau) ** 2 + tau * float(np.dot(second, second)))


def norm_l2_cells(f, grid: MovingGrid, tau: float) -> float:
    """Discrete L2(D) norm of the cell-constant source matrix."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid.n_cells:
        raise InvalidArgumentError(
            f"source matrix has {f.shape[0]} rows, grid has {grid.n_cells} cells")
    return math.sqrt(tau * float(np.einsum("ik,i->", f * f, grid.hs)))


def norm_b2_coeff(d) -> float:
    """Euclidean norm of coefficient-basis coordinates."""
    d = np.asarray(d, dtype=float)
    return float(np.linalg.norm(d))


def control_norm(v: DiscreteControl, grid: MovingGrid, tau: float) -> float:
    """Max of the five block norms (the discrete admissible-set norm)."""
    return max(norm_b2_2(v.s, tau), norm_b2_1(v.g, tau),
               norm_l2_cells(v.f, grid, tau), norm_b2_coeff(v.b), norm_b2_coeff(v.c))


def lipschitz_bound(R: float, T: float) -> float:
    """Bound C' with max_k |s_k - s_{k-1}| <= C' * tau for admissible controls.

    Discrete Agmon-type inequality applied to the first differences d_k: the
    minimum of tau d_k^2 is at most A/T and any value differs from it by at
    most 2 sqrt(A B) <= A + B, with A, B the two difference sums of the
    second-order norm; hence max d^2 <= (2 + 1/T) R^2.
    """
    return math.sqrt(2.0 + 1.0 / T) * R


# ---------------------------------------------------------------------------
# Admissibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    ok: bool
    violations: tuple[str, ...]
    norm: float

    def __bool__(self) -> bool:
        return self.ok


def is_admissible(v: DiscreteControl, R: float, delta: float, grid: MovingGrid,
                  tau: float) -> AdmissibilityReport:
    """Check membership in the discrete admissible set (closed: norm == R passes)."""
    violations = []
    if np.any(v.s < delta):
        k = int(np.argmax(v.s < delta))
        violations.append(f"boundary: s_{k}={v.s[k]} below delta={delta}")
    if v.s[0] != v.s[1]:
        violations.append(f"boundary: s_0={v.s[0]} != s_1={v.s[1]} (needs s_k = s_0 for k <= 1)")
    norm = control_norm(v, grid, tau)
    if norm > R:
        violations.append(f"norm: max block norm {norm:.6g} exceeds R={R}")
    return AdmissibilityReport(ok=not violations, violations=tuple(violations), norm=norm)


# ---------------------------------------------------------------------------
# Discrete -> continuous interpolants
# ---------------------------------------------------------------------------

class BoundaryInterpolant:
    """Piecewise-quadratic boundary interpolant (continuously differentiable).

    On [t_{k-1}, t_k] the value is
    s_{k-1} + (dt - tau/2) * sd_{k-1} + dt^2/2 * sdd_{k-1}
    with sd the backward first differences (sd_0 = 0 by the flat start) and
    sdd their forward differences.
    """

    def __init__(self, s, tau: float):
        s = np.asarray(s, dtype=float)
        if s.size < 2:
            raise InvalidArgumentError("boundary vector must have length >= 2")
        self.tau = tau
        self.knots = np.arange(s.size) * tau
        self.s = s
        # backward differences with the s_{-1} = s_0 convention
        sd = np.empty(s.size)
        sd[0] = 0.0
        sd[1:] = np.diff(s) / tau
        self.sd = sd
        self.sdd = np.diff(sd) / tau  # sdd[k] pairs with piece k+1

    def _piece(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.ceil(t / self.tau).astype(int), 1, self.s.size - 1)
        dt = t - self.knots[k - 1]
        return k, dt

    def __call__(self, t):
        k, dt = self._piece(t)
        out = self.s[k - 1] + (dt - 0.5 * self.tau) * self.sd[k - 1] \
            + 0.5 * dt**2 * self.sdd[k - 1]
        return out if out.ndim else float(out)

    def derivative(self, t):
        k, dt = self._piece(t)
        out = self.sd[k - 1] + dt * self.sdd[k - 1]
        return out if out.ndim else float(out)


class FluxInterpolant:
    """Piecewise-linear interpolant of the flux vector over the time grid."""

    def __init__(self, g, tau: float):
        self.g = np.asarray(g, dtype=float)
        self.tau = tau
        self.knots = np.arange(self.g.size) * tau

    def __call__(self, t):
        out = np.interp(np.asarray(t, dtype=float), self.knots, self.g)
        return out if out.ndim else float(out)


class CellConstantFunction:
    """Cell-constant extension of a value matrix over grid x time cells,
    extended by zero outside the covered rectangle."""

    def __init__(self, values, x_edges, t_edges):
        self.values = np.asarray(values, dtype=float)
        self.x_edges = np.asarray(x_edges, dtype=float)
        self.t_edges = np.asarray(t_edges, dtype=float)

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(self.x_edges, x, side="right") - 1
        k = np.searchsorted(self.t_edges, t, side="left") - 1
        # points exactly at the left/bottom edge belong to the first cell
        i = np.where((x == self.x_edges[0]), 0, i)
        k = np.where((t == self.t_edges[0]), 0, k)
        inside = (i >= 0) & (i < self.values.shape[0]) & (k >= 0) & (k < self.values.shape[1])
        ii = np.clip(i, 0, self.values.shape[0] - 1)
        kk = np.clip(k, 0, self.values.shape[1] - 1)
        out = np.where(inside, self.values[ii, kk], 0.0)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# The two mappings
# ---------------------------------------------------------------------------

def sample_control(v: ContinuousControl, time_grid: TimeGrid,
                   basis: CoefficientBasis, *, ell: float, delta: float,
                   m0: int | None = None) -> tuple[DiscreteControl, MovingGrid]:
    """Continuous -> discrete: sample s and g at time nodes (with the flat
    start s_0 = s_1 = s(0)), average f over the induced grid cells, and project
    b, c onto the coefficient basis.  Returns the control and its grid."""
    nodes = time_grid.nodes
    s = np.asarray(v.s(nodes), dtype=float).copy()
    s[0] = s[1] = float(v.s(0.0))
    g = np.asarray(v.g(nodes), dtype=float)
    if m0 is None:
        m0 = default_m0(float(np.min(s)), time_grid.tau)
    grid = build_moving_grid(s, ell=ell, delta=delta, m0=m0)
    f = function_cell_averages(v.f, grid, time_grid, provenance="source").values
    b = basis.project(v.b)
    c = basis.project(v.c)
    return DiscreteControl(s=s, g=g, f=f, b=b, c=c), grid


def interpolate_control(v: DiscreteControl, time_grid: TimeGrid, grid: MovingGrid,
                        basis: CoefficientBasis) -> ContinuousControl:
    """Discrete -> continuous: quadratic boundary, linear flux, cell-constant
    source, and basis expansions for the coefficient blocks."""
    return ContinuousControl(
        s=BoundaryInterpolant(v.s, time_grid.tau),
        g=FluxInterpolant(v.g, time_grid.tau),
        f=CellConstantFunction(v.f, grid.xs, time_grid.nodes),
        b=basis.expansion(v.b),
        c=basis.expansion(v.c),
    )


def remap_cell_values(values, old_edges, new_edges) -> np.ndarray:
    """Exact cell averages of a cell-constant function over a new partition.

    Works columnwise (time cells unchanged); uses the piecewise-linear
    cumulative integral of each column.
    """
    values = np.asarray(values, dtype=float)
    old_edges = np.asarray(old_edges, dtype=float)
    new_edges = np.asarray(new_edges, dtype=float)
    widths = np.diff(old_edges)
    cum = np.zeros((old_edges.size, values.shape[1]))
    cum[1:] = np.cumsum(values * widths[:, None], axis=0)
    out = np.empty((new_edges.size - 1, values.shape[1]))
    for col in range(values.shape[1]):
        at_edges = np.interp(new_edges, old_edges, cum[:, col])
        out[:, col] = np.diff(at_edges) / np.diff(new_edges)
    return out


# ---------------------------------------------------------------------------
# Projection onto the admissible set
# ---------------------------------------------------------------------------

def _shrink_boundary(s, s0: float, tau: float, R: float) -> np.ndarray:
    """Scale the deviation of s from the constant s0 until the second-order
    norm fits under R (monotone in the factor: bisection)."""
    s = np.asarray(s, dtype=float)
    base = np.full_like(s, s0)
    if norm_b2_2(base, tau) > R:
        raise ConstraintViolationError(
            f"even the constant boundary s0={s0} has norm above R={R}")
    lo, hi = 0.0, 1.0
    if norm_b2_2(s, tau) <= R:
        return s
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if norm_b2_2(base + mid * (s - base), tau) <= R:
            lo = mid
        else:
            hi = mid
    return base + lo * (s - base)


def project_admissible(v: DiscreteControl, *, R: float, delta: float, ell: float,
                       s0: float, tau: float, m0: int,
                       f_grid: MovingGrid | None = None) -> tuple[DiscreteControl, MovingGrid]:
    """Project a trial control into the admissible set: clip the boundary,
    restore the flat start, then shrink any block whose norm exceeds R.

    If the projected boundary induces a grid whose cell count differs from the
    one the source matrix lives on, pass that grid as ``f_grid`` so the source
    can be remapped by exact cell averaging.
    """
    s = np.clip(np.asarray(v.s, dtype=float), delta, ell)
    s[0] = s[1] = s0
    s = _shrink_boundary(s, s0, tau, R)
    grid = build_moving_grid(s, ell=ell, delta=delta, m0=m0)

    g = np.asarray(v.g, dtype=float)
    ng = norm_b2_1(g, tau)
    if ng > R:
        g = g * (R / ng)
    f = np.asarray(v.f, dtype=float)
    if f.shape[0] != grid.n_cells:
        if f_grid is None:
            raise InvalidArgumentError(
                "source matrix does not match the projected grid; pass f_grid to remap")
        f = remap_cell_values(f, f_grid.xs, grid.xs)
    nf = norm_l2_cells(f, grid, tau)
    if nf > R:
        f = f * (R / nf)
    b = np.asarray(v.b, dtype=float)
    nb = norm_b2_coeff(b)
    if nb > R:
        b = b * (R / nb)
    c = np.asarray(v.c, dtype=float)
    nc = norm_b2_coeff(c)
    if nc > R:
        c = c * (R / nc)
    return DiscreteControl(s=s, g=g, f=f, b=b, c=c), grid
