"""Time grid and boundary-adapted spatial grid construction.

The spatial grid is built inductively along the sorted boundary values: a
uniform base grid covers [0, min_k s_k], each strictly larger boundary value
is inserted as a node (so every s_k is exactly a grid node), and a uniform
tail covers the remainder up to ell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, InvalidArgumentError

SNAP_REL_TOL = 1e-12  # cells thinner than this fraction of ell are collapsed


@dataclass(frozen=True)
class TimeGrid:
    n: int
    tau: float
    nodes: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)


def build_time_grid(T: float, n: int) -> TimeGrid:
    """Uniform grid t_k = k*T/n, k = 0..n."""
    if not (T > 0):
        raise InvalidArgumentError(f"final time must be positive, got {T}")
    if n < 2:
        raise InvalidArgumentError(f"need at least 2 time steps, got {n}")
    tau = T / n
    return TimeGrid(n=n, tau=tau, nodes=np.arange(n + 1) * tau)


@dataclass(frozen=True)
class MovingGrid:
    """Spatial grid on [0, ell] adapted to a discrete boundary vector.

    ``m[k]`` is the node index of the boundary value s_k, so
    ``xs[m[k]] == s[k]`` (up to a recorded snap).  ``perm`` sorts the boundary
    values; node sets are nested along that order.
    """

    xs: np.ndarray
    hs: np.ndarray
    perm: np.ndarray
    m: np.ndarray
    s: np.ndarray
    ell: float
    base_h: float
    tail_h: float | None
    m0: int
    max_h: float
    snapped: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for arr in (self.xs, self.hs, self.perm, self.m, self.s):
            arr.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return self.xs.size - 1

    @property
    def n_levels(self) -> int:
        return self.s.size - 1

    def active_count(self, k: int) -> int:
        """Node count m_{j_k} of the level-k system (index of the boundary node)."""
        return int(self.m[k])


def default_m0(s_min: float, tau: float) -> int:
    """Base node count making the base step close to sqrt(tau)."""
    return max(2, math.ceil(s_min / math.sqrt(tau)))


def build_moving_grid(s, ell: float, delta: float, m0: int, *,
                      tau: float | None = None,
                      htau_c: float | None = None) -> MovingGrid:
    """Construct the boundary-adapted grid for the discrete boundary ``s``.

    When both ``tau`` and ``htau_c`` are given, the mesh-width coupling
    max_i h_i <= htau_c * sqrt(tau) is enforced.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size < 2:
        raise InvalidArgumentError("boundary vector must have length n+1 >= 2")
    if m0 < 2:
        raise InvalidArgumentError(f"base node count must be >= 2, got {m0}")
    if s[0] != s[1]:
        raise ConstraintViolationError(
            f"boundary must satisfy s_0 = s_1 (discrete s'(0)=0), got {s[0]} != {s[1]}")
    if np.any(s < delta):
        k = int(np.argmax(s < delta))
        raise ConstraintViolationError(f"boundary value s_{k}={s[k]} below delta={delta}")
    if np.any(s > ell):
        k = int(np.argmax(s > ell))
        raise ConstraintViolationError(f"boundary value s_{k}={s[k]} exceeds ell={ell}")

    perm = np.argsort(s, kind="stable")
    snap_tol = SNAP_REL_TOL * ell

    s_min = s[perm[0]]
    base_h = s_min / m0
    xs = list(np.arange(m0 + 1) * base_h)
    xs[m0] = s_min  # exact, not m0 * (s_min / m0)

    sorted_node_idx = np.empty(s.size, dtype=int)
    sorted_node_idx[0] = m0
    snapped: list[int] = []
    for j in range(1, s.size):
        v = s[perm[j]]
        last = xs[-1]
        if v <= last:
            sorted_node_idx[j] = len(xs) - 1
        elif v - last < snap_tol:
            # would create a degenerate cell: reuse the existing node
            sorted_node_idx[j] = len(xs) - 1
            snapped.append(int(perm[j]))
        else:
            xs.append(v)
            sorted_node_idx[j] = len(xs) - 1

    m = np.empty(s.size, dtype=int)
    m[perm] = sorted_node_idx

    tail_h = None
    if ell - xs[-1] >= snap_tol:
        n_tail = math.ceil((ell - xs[-1]) / base_h)
        tail_h = (ell - xs[-1]) / n_tail
        start = xs[-1]
        xs.extend(start + i * tail_h for i in range(1, n_tail))
        xs.append(ell)

    xs_arr = np.asarray(xs)
    hs = np.diff(xs_arr)
    max_h = float(hs.max())
    if tau is not None and htau_c is not None and max_h > htau_c * math.sqrt(tau):
        raise ConstraintViolationError(
            f"mesh width {max_h:.3e} exceeds {htau_c} * sqrt(tau) = "
            f"{htau_c * math.sqrt(tau):.3e}; increase m0 or htau_c")

    return MovingGrid(xs=xs_arr, hs=hs, perm=perm, m=m, s=s.copy(), ell=float(ell),
                      base_h=base_h, tail_h=tail_h, m0=m0, max_h=max_h,
                      snapped=tuple(snapped))


def segment_cells(grid: MovingGrid, k: int) -> range:
    """Active cell indices 0 .. m_{j_k}-1 for the level-k system assembly."""
    if not (0 <= k <= grid.n_levels):
        raise InvalidArgumentError(f"time level {k} out of range 0..{grid.n_levels}")
    return range(grid.active_count(k))
