"""Discrete optimal control solver for a one-phase inverse moving-boundary
heat problem: boundary-adapted grids, per-step tridiagonal stepping, cost
functionals over measured data, and projected derivative-free minimization.
"""

__version__ = "0.1.0"

from .basis import CoefficientBasis
from .config import ExperimentConfig, initial_control, load_config
from .controls import (AdmissibilityReport, BoundaryInterpolant,
                       CellConstantFunction, ContinuousControl,
                       DiscreteControl, FluxInterpolant, control_norm,
                       interpolate_control, is_admissible, lipschitz_bound,
                       norm_b2_1, norm_b2_2, norm_b2_coeff, norm_l2_cells,
                       project_admissible, sample_control, zero_control)
from .cost import (CostBreakdown, Measurements, eval_continuous_cost,
                   eval_discrete_cost, self_consistent_measurements)
from .diagnostics import (EnergyReport, boundary_uniform_gap, energy_report,
                          first_energy_sides, second_energy_lhs,
                          weak_form_residual, weak_form_residuals)
from .errors import (ConfigError, ConstraintViolationError, DomainError,
                     ExpressionError, ExpressionSyntaxError,
                     InvalidArgumentError, NumericError, SingularSystemError,
                     StefanOptError)
from .expressions import Expr, parse
from .forward import (DiscreteState, LevelAverages, StateInterpolations,
                      TridiagonalSystem, assemble_step, compute_averages,
                      interpolations, max_identity_residual, reflect_extend,
                      run_forward, solve_step, summation_identity_residual)
from .grids import (MovingGrid, TimeGrid, build_moving_grid, build_time_grid,
                    default_m0, segment_cells)
from .optimize import (LevelResult, OptimizerConfig, convergence_study,
                       minimize_level, refine_control, transfer_control)
from .problem import ProblemData
from .steklov import (CellAverages, cell_average, coefficient_cell_averages,
                      function_cell_averages, p_backward_x_difference,
                      time_average, time_averages_all, trace_averages,
                      trace_averages_all)

__all__ = [name for name in dir() if not name.startswith("_")]
