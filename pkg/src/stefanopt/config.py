"""Experiment configuration: TOML schema, validation, and assembly of the
problem objects from declarative expressions.

Unknown keys anywhere in the file are rejected so typos cannot silently fall
back to defaults.
"""

from __future__ import annotations

import hashlib
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field

import numpy as np

from .basis import CoefficientBasis
from .controls import DiscreteControl
from .cost import Measurements
from .errors import (ConfigError, ConstraintViolationError, ExpressionError,
                     StefanOptError)
from .expressions import Expr, parse
from .grids import MovingGrid, TimeGrid, build_moving_grid, build_time_grid, default_m0
from .optimize import OptimizerConfig
from .problem import ProblemData
from .steklov import function_cell_averages

_PROBLEM_EXPRS = ("a", "p", "gamma", "chi", "phi", "mu", "w")
_PROBLEM_SCALARS = {
    "s0": 1.0, "T": 1.0, "ell": 2.0, "delta": 0.25, "R": 10.0,
    "s_bar": 1.0, "beta0": 1.0, "beta1": 1.0, "beta2": 1.0,
}
_CONTROL_BLOCKS = ("s", "g", "f", "b", "c")


@dataclass(frozen=True)
class ControlSpec:
    """Per-block directive: free for optimization, or a fixed expression."""

    block: str
    optimize: bool
    expr: Expr | None

    @property
    def summary(self) -> str:
        return "optimize" if self.optimize else f"fixed: {self.expr.source}"


@dataclass(frozen=True)
class ExperimentConfig:
    data: ProblemData
    meas: Measurements
    controls: dict[str, ControlSpec]
    optimizer: OptimizerConfig
    n: int
    levels: tuple[int, ...]
    m0: int
    m0_per_n: float
    htau_c: float
    basis_size: int
    fine_n: int
    out_dir: str
    formats: tuple[str, ...]
    config_hash: str
    source_path: str
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def free_blocks(self) -> tuple[str, ...]:
        return tuple(b for b in _CONTROL_BLOCKS if self.controls[b].optimize)

    def m0_for(self, n: int) -> int:
        if self.m0 > 0:
            return self.m0
        if self.m0_per_n > 0:
            return max(2, math.ceil(self.m0_per_n * n))
        tau = self.data.T / n
        return default_m0(self.data.delta, tau)

    def basis(self) -> CoefficientBasis:
        return CoefficientBasis(size=self.basis_size, ell=self.data.ell,
                                T=self.data.T)


def _require_table(raw: dict, name: str) -> dict:
    value = raw.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError("must be a table", field=name)
    return dict(value)


def _check_unknown(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys {unknown}", field=where)


def _scalar(table: dict, key: str, default, where: str, *, kind=float):
    value = table.pop(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=f"{where}.{key}")
    return kind(value)


def _parse_expr(text, where: str) -> Expr:
    if not isinstance(text, str):
        raise ConfigError(f"expected an expression string, got {text!r}", field=where)
    try:
        return parse(text)
    except ExpressionError as exc:
        raise ConfigError(f"bad expression: {exc}", field=where) from exc


def _fn_xt(expr: Expr):
    return lambda x, t: expr(x, t)


def _fn_x(expr: Expr):
    return lambda x: expr(x, np.zeros_like(np.asarray(x, dtype=float)))


def _fn_t(expr: Expr):
    return lambda t: expr(np.zeros_like(np.asarray(t, dtype=float)), t)


def load_config(path) -> ExperimentConfig:
    """Read, validate and assemble an experiment configuration file."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", field=str(path)) from exc
    try:
        raw = tomllib.loads(blob.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config: {exc}", field=str(path)) from exc
    config_hash = hashlib.sha256(blob).hexdigest()

    _check_unknown(raw, ("problem", "discretization", "controls", "optimizer",
                         "output"), "top level")

    prob = _require_table(raw, "problem")
    exprs = {}
    for name in _PROBLEM_EXPRS:
        if name not in prob:
            raise ConfigError("missing required expression", field=f"problem.{name}")
        exprs[name] = _parse_expr(prob.pop(name), f"problem.{name}")
    scalars = {key: _scalar(prob, key, default, "problem")
               for key, default in _PROBLEM_SCALARS.items()}
    _check_unknown(prob, (), "problem")
    try:
        data = ProblemData(
            a=_fn_xt(exprs["a"]), p=_fn_xt(exprs["p"]),
            gamma=_fn_xt(exprs["gamma"]), chi=_fn_xt(exprs["chi"]),
            phi=_fn_x(exprs["phi"]), mu=_fn_t(exprs["mu"]), w=_fn_x(exprs["w"]),
            s0=scalars["s0"], T=scalars["T"], ell=scalars["ell"],
            delta=scalars["delta"], R=scalars["R"], beta0=scalars["beta0"],
            beta1=scalars["beta1"], beta2=scalars["beta2"])
    except ConstraintViolationError as exc:
        raise ConfigError(str(exc), field="problem") from exc
    if not (data.delta <= scalars["s_bar"] <= data.ell):
        raise ConfigError(
            f"must lie in [delta, ell] = [{data.delta}, {data.ell}]",
            field="problem.s_bar")
    meas = Measurements(w=data.w, mu=data.mu, s_bar=scalars["s_bar"])

    disc = _require_table(raw, "discretization")
    n = _scalar(disc, "n", 16, "discretization", kind=int)
    levels_raw = disc.pop("levels", [])
    if not isinstance(levels_raw, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in levels_raw):
        raise ConfigError("must be a list of integers", field="discretization.levels")
    levels = tuple(levels_raw)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels must be strictly increasing",
                          field="discretization.levels")
    m0 = _scalar(disc, "m0", 0, "discretization", kind=int)
    m0_per_n = _scalar(disc, "m0_per_n", 0.0, "discretization")
    htau_c = _scalar(disc, "htau_c", 0.0, "discretization")
    basis_size = _scalar(disc, "basis_size", 6, "discretization", kind=int)
    fine_n = _scalar(disc, "fine_n", 0, "discretization", kind=int)
    _check_unknown(disc, (), "discretization")
    if n < 2:
        raise ConfigError("need at least 2 time steps", field="discretization.n")
    if basis_size < 1:
        raise ConfigError("need at least one basis function",
                          field="discretization.basis_size")

    ctrl = _require_table(raw, "controls")
    controls = {}
    for block in _CONTROL_BLOCKS:
        spec = ctrl.pop(block, "optimize" if block == "s" else "0")
        where = f"controls.{block}"
        if spec == "optimize":
            controls[block] = ControlSpec(block=block, optimize=True, expr=None)
        else:
            controls[block] = ControlSpec(block=block, optimize=False,
                                          expr=_parse_expr(spec, where))
    _check_unknown(ctrl, (), "controls")

    opt = _require_table(raw, "optimizer")
    method = opt.pop("method", "compass-search")
    optimizer_kwargs = dict(
        method=method,
        max_evals=_scalar(opt, "max_evals", 400, "optimizer", kind=int),
        step_init=_scalar(opt, "step_init", 0.25, "optimizer"),
        step_min=_scalar(opt, "step_min", 1e-4, "optimizer"),
        fd_epsilon=_scalar(opt, "fd_epsilon", 1e-6, "optimizer"),
        seed=_scalar(opt, "seed", 0, "optimizer", kind=int),
    )
    _check_unknown(opt, (), "optimizer")
    try:
        optimizer = OptimizerConfig(
            free_blocks=tuple(b for b in _CONTROL_BLOCKS if controls[b].optimize),
            **optimizer_kwargs)
    except StefanOptError as exc:
        raise ConfigError(str(exc), field="optimizer") from exc

    out = _require_table(raw, "output")
    out_dir = out.pop("directory", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("must be a string", field="output.directory")
    formats_raw = out.pop("formats", ["csv"])
    if not isinstance(formats_raw, list) or not all(isinstance(f, str) for f in formats_raw):
        raise ConfigError("must be a list of strings", field="output.formats")
    bad = sorted(set(formats_raw) - {"csv"})
    if bad:
        raise ConfigError(f"unsupported formats {bad}", field="output.formats")
    _check_unknown(out, (), "output")

    return ExperimentConfig(data=data, meas=meas, controls=controls,
                            optimizer=optimizer, n=n, levels=levels, m0=m0,
                            m0_per_n=m0_per_n, htau_c=htau_c,
                            basis_size=basis_size, fine_n=fine_n,
                            out_dir=out_dir, formats=tuple(formats_raw),
                            config_hash=config_hash, source_path=str(path),
                            raw=raw)


# ---------------------------------------------------------------------------
# Control assembly at a given resolution
# ---------------------------------------------------------------------------

def initial_control(cfg: ExperimentConfig, n: int,
                    basis: CoefficientBasis) -> tuple[DiscreteControl, MovingGrid, TimeGrid]:
    """Build the starting discrete control at resolution n.

    Fixed blocks are discretized from their expressions; free blocks start at
    zero (constant s0 for the boundary).
    """
    time_grid = build_time_grid(cfg.data.T, n)
    nodes = time_grid.nodes
    m0 = cfg.m0_for(n)

    spec_s = cfg.controls["s"]
    if spec_s.optimize or spec_s.expr is None:
        s = np.full(n + 1, cfg.data.s0)
    else:
        fn = _fn_t(spec_s.expr)
        s = np.asarray(fn(nodes), dtype=float) * np.ones(n + 1)
        s[0] = s[1] = float(fn(0.0))
    kwargs = {}
    if cfg.htau_c > 0:
        kwargs = {"tau": time_grid.tau, "htau_c": cfg.htau_c}
    try:
        grid = build_moving_grid(s, ell=cfg.data.ell, delta=cfg.data.delta,
                                 m0=m0, **kwargs)
    except ConstraintViolationError as exc:
        raise ConfigError(str(exc), field="controls.s") from exc

    spec_g = cfg.controls["g"]
    if spec_g.optimize:
        g = np.zeros(n + 1)
    else:
        g = np.asarray(_fn_t(spec_g.expr)(nodes), dtype=float) * np.ones(n + 1)

    spec_f = cfg.controls["f"]
    if spec_f.optimize:
        f = np.zeros((grid.n_cells, n))
    else:
        f = function_cell_averages(_fn_xt(spec_f.expr), grid, time_grid,
                                   provenance="source").values

    coeffs = {}
    for block in ("b", "c"):
        spec = cfg.controls[block]
        if spec.optimize:
            coeffs[block] = np.zeros(basis.size)
        elif spec.expr.source.strip() == "0":
            coeffs[block] = np.zeros(basis.size)
        else:
            coeffs[block] = basis.project(_fn_xt(spec.expr))

    v = DiscreteControl(s=s, g=g, f=f, b=coeffs["b"], c=coeffs["c"])
    return v, grid, time_grid
