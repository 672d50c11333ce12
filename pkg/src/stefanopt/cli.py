"""Command-line entry point: forward solves, inversion runs, refinement
studies and the diagnostics suite, driven by a TOML configuration file.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, initial_control, load_config
from .controls import interpolate_control, is_admissible
from .cost import eval_discrete_cost
from .diagnostics import energy_report, weak_form_residual
from .errors import ConfigError, ExpressionError, StefanOptError
from .forward import max_identity_residual, run_forward
from .optimize import convergence_study, minimize_level, study_gaps

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _write_csv(path: Path, cfg: ExperimentConfig, columns, rows) -> None:
    lines = [f"# config_hash={cfg.config_hash}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_metadata(out: Path, cfg: ExperimentConfig, verb: str, seed: int,
                    extra: dict) -> None:
    meta = {
        "verb": verb,
        "config_path": cfg.source_path,
        "config_hash": cfg.config_hash,
        "seed": seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "tolerances": {"solve_residual": 1e-10, "identity_residual": 1e-9},
    }
    meta.update(extra)
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")


def _state_rows(state):
    rows = []
    for k in range(state.n + 1):
        t_k = state.time_grid.nodes[k]
        mk = state.grid.active_count(k)
        for i, x_i in enumerate(state.grid.xs):
            rows.append((k, t_k, i, x_i, state.u[k, i], int(i <= mk)))
    return rows


def run_forward_experiment(cfg: ExperimentConfig, out: Path, seed: int) -> dict:
    free = cfg.free_blocks
    if free:
        raise ConfigError(
            f"forward mode needs every control block fixed; free: {list(free)}",
            field="controls")
    basis = cfg.basis()
    v, grid, time_grid = initial_control(cfg, cfg.n, basis)
    state = run_forward(v, cfg.data, grid, time_grid, basis)
    residual = max_identity_residual(state)
    cost = eval_discrete_cost(state, v, cfg.meas, cfg.data.betas)
    _write_csv(out / "state.csv", cfg,
               ("k", "t_k", "i", "x_i", "u", "active_flag"), _state_rows(state))
    return {"identity_residual": residual, "cost_total": cost.total,
            "n": cfg.n, "m0": cfg.m0_for(cfg.n)}


def run_invert_experiment(cfg: ExperimentConfig, out: Path, seed: int) -> dict:
    basis = cfg.basis()
    opt = dataclasses.replace(cfg.optimizer, seed=seed)
    init, grid, time_grid = initial_control(cfg, cfg.n, basis)
    result = minimize_level(cfg.data, cfg.meas, cfg.n, opt, init, basis=basis,
                            m0=cfg.m0_for(cfg.n))
    trace_rows = [(j, total, np.nan, np.nan, np.nan)
                  for j, total in enumerate(result.accepted_costs)]
    best = result.best_cost
    trace_rows[-1] = (len(result.accepted_costs) - 1, best.total,
                      best.term_final_temp, best.term_boundary_temp,
                      best.term_final_position)
    _write_csv(out / "cost_trace.csv", cfg,
               ("eval_index", "total", "term1", "term2", "term3"), trace_rows)
    rows = [(k, result.best_control.s[k], result.best_control.g[k])
            for k in range(cfg.n + 1)]
    _write_csv(out / "best_control.csv", cfg, ("k", "s_k", "g_k"), rows)
    return {"n": cfg.n, "best_cost": best.total, "evals": result.evals,
            "epsilon_n": result.epsilon_n, "exhausted": result.exhausted}


def run_study_experiment(cfg: ExperimentConfig, out: Path, seed: int) -> dict:
    if len(cfg.levels) < 1:
        raise ConfigError("study mode needs discretization.levels",
                          field="discretization.levels")
    basis = cfg.basis()
    opt = dataclasses.replace(cfg.optimizer, seed=seed)
    init, grid, time_grid = initial_control(cfg, cfg.levels[0], basis)
    t0 = time.perf_counter()
    results = convergence_study(cfg.data, cfg.meas, cfg.levels, opt, init,
                                basis=basis, m0_for=cfg.m0_for)
    elapsed = time.perf_counter() - t0
    gaps = [np.nan] + study_gaps(results)
    rows = [(r.n, r.best_cost.total, gap, r.evals)
            for r, gap in zip(results, gaps)]
    _write_csv(out / "convergence.csv", cfg, ("n", "I_n_star", "gap", "evals"), rows)
    return {"levels": list(cfg.levels), "wall_seconds": elapsed,
            "best_costs": [r.best_cost.total for r in results]}


def run_check_experiment(cfg: ExperimentConfig, out: Path, seed: int) -> dict:
    basis = cfg.basis()
    v, grid, time_grid = initial_control(cfg, cfg.n, basis)
    state = run_forward(v, cfg.data, grid, time_grid, basis)
    report = energy_report(state, v, cfg.data)
    cont = interpolate_control(v, time_grid, grid, basis)
    residual = weak_form_residual(state, cont, cfg.data)
    admissible = is_admissible(v, cfg.data.R, cfg.data.delta, grid, time_grid.tau)
    rows = [
        ("identity_residual", max_identity_residual(state)),
        ("energy_lhs_first", report.lhs_first),
        ("energy_rhs_data_first", report.rhs_data_first),
        ("energy_lhs_second", report.lhs_second),
        ("energy_rhs_data_second", report.rhs_data_second),
        ("weak_form_residual", residual),
        ("admissible", int(bool(admissible))),
        ("control_norm", admissible.norm),
    ]
    _write_csv(out / "diagnostics.csv", cfg, ("quantity", "value"), rows)
    return {"n": cfg.n, "diagnostics": {name: float(val) for name, val in rows}}


_VERBS = {
    "forward": run_forward_experiment,
    "invert": run_invert_experiment,
    "study": run_study_experiment,
    "check": run_check_experiment,
}


def run_experiment(cfg: ExperimentConfig, verb: str, out_dir=None,
                   seed: int | None = None, dry_run: bool = False) -> int:
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    seed = cfg.optimizer.seed if seed is None else seed
    if dry_run:
        plan = {
            "verb": verb,
            "out_dir": str(out),
            "n": cfg.n,
            "levels": list(cfg.levels),
            "free_blocks": list(cfg.free_blocks),
            "seed": seed,
            "m0": cfg.m0_for(cfg.n),
        }
        print(json.dumps(plan, indent=2, sort_keys=True))
        return EXIT_OK
    out.mkdir(parents=True, exist_ok=True)
    extra = _VERBS[verb](cfg, out, seed)
    _write_metadata(out, cfg, verb, seed, extra)
    print(f"{verb}: wrote results to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stefanopt",
        description="Inverse moving-boundary problem solver and study driver.")
    parser.add_argument("verb", choices=sorted(_VERBS))
    parser.add_argument("--config", required=True, help="path to the TOML config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate and print the plan without writing")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        return run_experiment(cfg, args.verb, out_dir=args.out, seed=args.seed,
                              dry_run=args.dry_run)
    except (ConfigError, ExpressionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StefanOptError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
