"""Projected minimization of the discrete cost over the admissible set.

Two derivative-free-friendly methods are provided: compass search over the
concatenated control coordinates with per-block step scaling, and a projected
gradient method with central-difference gradients.  Every trial point is
projected into the admissible set before evaluation, so accepted iterates are
admissible by construction and the accepted-cost sequence is nonincreasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import CoefficientBasis
from .controls import (DiscreteControl, interpolate_control, is_admissible,
                       project_admissible, sample_control)
from .cost import CostBreakdown, Measurements, eval_discrete_cost
from .errors import InvalidArgumentError, NumericError, StefanOptError
from .forward import compute_averages, run_forward
from .grids import MovingGrid, TimeGrid, build_moving_grid, build_time_grid, default_m0
from .problem import ProblemData

_ALL_BLOCKS = ("s", "g", "f", "b", "c")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "compass-search"
    max_evals: int = 400
    step_init: float = 0.25
    step_min: float = 1e-4
    fd_epsilon: float = 1e-6
    seed: int = 0
    free_blocks: tuple[str, ...] = _ALL_BLOCKS

    def __post_init__(self):
        if self.method not in ("compass-search", "fd-projected-gradient"):
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if self.max_evals < 1:
            raise InvalidArgumentError("evaluation budget must be >= 1")
        if not (0 < self.step_min <= self.step_init):
            raise InvalidArgumentError("need 0 < step_min <= step_init")
        bad = set(self.free_blocks) - set(_ALL_BLOCKS)
        if bad:
            raise InvalidArgumentError(f"unknown control blocks: {sorted(bad)}")


@dataclass(frozen=True)
class LevelResult:
    n: int
    best_control: DiscreteControl
    best_cost: CostBreakdown
    evals: int
    epsilon_n: float
    exhausted: bool
    grid: MovingGrid
    accepted_costs: tuple[float, ...] = field(default=())


# ---------------------------------------------------------------------------
# Evaluation with projection and per-boundary caching
# ---------------------------------------------------------------------------

class _Evaluator:
    """Projects, solves and scores trial controls, counting evaluations.

    Grids and state solves are cached by the boundary vector so repeated
    trials that only change other blocks do not rebuild the mesh.
    """

    def __init__(self, data: ProblemData, meas: Measurements,
                 time_grid: TimeGrid, basis: CoefficientBasis, m0: int):
        self.data = data
        self.meas = meas
        self.time_grid = time_grid
        self.basis = basis
        self.m0 = m0
        self.evals = 0
        self._grids: dict[bytes, MovingGrid] = {}

    def grid_for(self, s: np.ndarray) -> MovingGrid:
        key = np.asarray(s, dtype=float).tobytes()
        grid = self._grids.get(key)
        if grid is None:
            grid = build_moving_grid(s, ell=self.data.ell, delta=self.data.delta,
                                     m0=self.m0)
            if len(self._grids) > 64:
                self._grids.clear()
            self._grids[key] = grid
        return grid

    def project(self, v: DiscreteControl,
                f_grid: MovingGrid) -> tuple[DiscreteControl, MovingGrid]:
        vp, _ = project_admissible(v, R=self.data.R, delta=self.data.delta,
                                   ell=self.data.ell, s0=self.data.s0,
                                   tau=self.time_grid.tau, m0=self.m0,
                                   f_grid=f_grid)
        return vp, self.grid_for(vp.s)

    def cost(self, v: DiscreteControl, grid: MovingGrid) -> CostBreakdown | None:
        """Score one admissible control; None signals a rejected iterate."""
        self.evals += 1
        try:
            avgs = compute_averages(v, self.data, grid, self.time_grid, self.basis)
            state = run_forward(v, self.data, grid, self.time_grid, self.basis,
                                averages=avgs)
            return eval_discrete_cost(state, v, self.meas, self.data.betas)
        except (NumericError, StefanOptError):
            return None


def _coordinates(v: DiscreteControl, grid: MovingGrid,
                 free_blocks) -> list[tuple[str, tuple]]:
    """Free scalar coordinates of a control; the flat start pins s_0, s_1."""
    coords: list[tuple[str, tuple]] = []
    if "s" in free_blocks:
        coords += [("s", (k,)) for k in range(2, v.s.size)]
    if "g" in free_blocks:
        coords += [("g", (k,)) for k in range(v.g.size)]
    if "f" in free_blocks:
        coords += [("f", idx) for idx in np.ndindex(grid.n_cells, v.n)]
    for name in ("b", "c"):
        if name in free_blocks:
            coords += [(name, (k,)) for k in range(getattr(v, name).size)]
    return coords


def _block_scales(data: ProblemData) -> dict[str, float]:
    return {"s": data.delta, "g": data.R, "f": data.R, "b": data.R, "c": data.R}


def _bump(v: DiscreteControl, block: str, idx: tuple, amount: float) -> DiscreteControl:
    arr = np.array(getattr(v, block), dtype=float)
    arr[idx] += amount
    return v.with_block(block, arr)


# ---------------------------------------------------------------------------
# The two search methods
# ---------------------------------------------------------------------------

def _compass_search(ev: _Evaluator, v, grid, cost0, config, scales, rng):
    best_v, best_grid, best = v, grid, cost0
    accepted = [best.total]
    step = float(config.step_init)
    last_gain, last_step = 0.0, step
    while ev.evals < config.max_evals and step > config.step_min:
        coords = _coordinates(best_v, best_grid, config.free_blocks)
        if not coords:
            break
        order = rng.permutation(len(coords))
        improved = False
        for pos in order:
            if ev.evals >= config.max_evals:
                break
            block, idx = coords[pos]
            for sign in (1.0, -1.0):
                trial = _bump(best_v, block, idx, sign * step * scales[block])
                try:
                    vp, gp = ev.project(trial, best_grid)
                except StefanOptError:
                    continue
                c = ev.cost(vp, gp)
                if c is not None and c.total < best.total:
                    last_gain = best.total - c.total
                    last_step = step * scales[block]
                    best_v, best_grid, best = vp, gp, c
                    accepted.append(best.total)
                    improved = True
                    break
            if improved:
                break
        if not improved:
            step *= 0.5
    slope = last_gain / last_step if last_step > 0 else 0.0
    eps = last_gain + config.step_min * slope
    return best_v, best_grid, best, accepted, eps


def _fd_gradient(ev: _Evaluator, v, grid, config, scales):
    coords = _coordinates(v, grid, config.free_blocks)
    g = np.zeros(len(coords))
    for j, (block, idx) in enumerate(coords):
        eps = config.fd_epsilon * scales[block]
        cp = ev.cost(_bump(v, block, idx, eps), grid)
        cm = ev.cost(_bump(v, block, idx, -eps), grid)
        if cp is None or cm is None:
            return None, coords
        g[j] = (cp.total - cm.total) / (2 * eps)
    return g, coords


def _projected_gradient(ev: _Evaluator, v, grid, cost0, config, scales, rng):
    best_v, best_grid, best = v, grid, cost0
    accepted = [best.total]
    alpha = float(config.step_init)
    last_gain, last_step = 0.0, alpha
    while ev.evals < config.max_evals and alpha > config.step_min:
        g, coords = _fd_gradient(ev, best_v, best_grid, config, scales)
        if g is None or not len(coords) or not np.any(g):
            break
        gn = float(np.linalg.norm(g))
        improved = False
        while alpha > config.step_min and ev.evals < config.max_evals:
            trial = best_v
            for (block, idx), gj in zip(coords, g):
                if gj != 0.0:
                    trial = _bump(trial, block, idx, -alpha * gj / gn * scales[block])
            try:
                vp, gp = ev.project(trial, best_grid)
            except StefanOptError:
                alpha *= 0.5
                continue
            c = ev.cost(vp, gp)
            if c is not None and c.total < best.total:
                last_gain = best.total - c.total
                last_step = alpha
                best_v, best_grid, best = vp, gp, c
                accepted.append(best.total)
                improved = True
                alpha = min(2 * alpha, config.step_init)
                break
            alpha *= 0.5
        if not improved:
            break
    slope = last_gain / last_step if last_step > 0 else 0.0
    eps = last_gain + config.step_min * slope
    return best_v, best_grid, best, accepted, eps


# ---------------------------------------------------------------------------
# Public driver operations
# ---------------------------------------------------------------------------

def minimize_level(data: ProblemData, meas: Measurements, n: int,
                   config: OptimizerConfig, init: DiscreteControl, *,
                   basis: CoefficientBasis, m0: int | None = None) -> LevelResult:
    """Minimize the discrete cost at resolution n starting from ``init``.

    The initial control is projected into the admissible set first; the
    returned control is admissible with cost at most the projected initial
    cost.
    """
    if init.n != n:
        raise InvalidArgumentError(f"initial control has n={init.n}, requested {n}")
    time_grid = build_time_grid(data.T, n)
    if m0 is None:
        m0 = default_m0(data.delta, time_grid.tau)
    ev = _Evaluator(data, meas, time_grid, basis, m0)

    init_grid = build_moving_grid(init.s, ell=data.ell, delta=data.delta, m0=m0)
    if init.f.shape[0] != init_grid.n_cells:
        raise InvalidArgumentError(
            f"source matrix rows {init.f.shape[0]} do not match the grid of the "
            f"initial boundary ({init_grid.n_cells} cells)")
    v0, grid0 = ev.project(init, init_grid)
    cost0 = ev.cost(v0, grid0)
    if cost0 is None:
        raise NumericError("forward solve failed at the projected initial control")

    rng = np.random.default_rng(config.seed)
    scales = _block_scales(data)
    search = _compass_search if config.method == "compass-search" else _projected_gradient
    best_v, best_grid, best, accepted, eps = search(ev, v0, grid0, cost0,
                                                    config, scales, rng)
    assert is_admissible(best_v, data.R, data.delta, best_grid, time_grid.tau)
    return LevelResult(n=n, best_control=best_v, best_cost=best, evals=ev.evals,
                       epsilon_n=eps, exhausted=ev.evals >= config.max_evals,
                       grid=best_grid, accepted_costs=tuple(accepted))


def transfer_control(v: DiscreteControl, time_grid: TimeGrid, grid: MovingGrid,
                     target_n: int, basis: CoefficientBasis, *, ell: float,
                     delta: float, m0: int | None = None) -> tuple[DiscreteControl, MovingGrid]:
    """Move a discrete control to another resolution by interpolating to
    functions and resampling (the composition of the two mappings)."""
    T = time_grid.tau * time_grid.n
    fine = build_time_grid(T, target_n)
    cont = interpolate_control(v, time_grid, grid, basis)
    return sample_control(cont, fine, basis, ell=ell, delta=delta, m0=m0)


def refine_control(v: DiscreteControl, time_grid: TimeGrid, grid: MovingGrid,
                   basis: CoefficientBasis, *, ell: float, delta: float,
                   m0: int | None = None) -> tuple[DiscreteControl, MovingGrid]:
    """Warm-start mapping from level n to level 2n."""
    return transfer_control(v, time_grid, grid, 2 * time_grid.n, basis,
                            ell=ell, delta=delta, m0=m0)


def convergence_study(data: ProblemData, meas: Measurements, levels,
                      config: OptimizerConfig, init: DiscreteControl, *,
                      basis: CoefficientBasis,
                      m0_for=None) -> list[LevelResult]:
    """Run minimize_level over increasing resolutions, warm-starting each
    level from the transferred best control of the previous one.

    ``m0_for`` optionally maps a level n to its base node count.
    """
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidArgumentError("levels must be strictly increasing")
    results: list[LevelResult] = []
    current = init
    for n in levels:
        m0 = m0_for(n) if m0_for is not None else None
        if current.n != n:
            prev_tg = build_time_grid(data.T, current.n)
            prev_grid = results[-1].grid if results else build_moving_grid(
                current.s, ell=data.ell, delta=data.delta,
                m0=default_m0(data.delta, prev_tg.tau))
            current, _ = transfer_control(current, prev_tg, prev_grid, n, basis,
                                          ell=data.ell, delta=data.delta, m0=m0)
        res = minimize_level(data, meas, n, config, current, basis=basis, m0=m0)
        results.append(res)
        current = res.best_control
    return results


def study_gaps(results) -> list[float]:
    """Successive absolute gaps of the best-cost sequence of a study."""
    totals = [r.best_cost.total for r in results]
    return [abs(b - a) for a, b in zip(totals, totals[1:])]
