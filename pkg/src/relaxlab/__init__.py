"""Linear and nonlinear large-time analysis of partially dissipative balance laws."""

from .asymptotics_lab import (ChapmanEnskogOperators, build_chapman_enskog,
                              chapman_enskog_study, compare_chapman_enskog,
                              compare_to_linear, solve_parabolic)
from .cd_transform import CDSystem, projectors, to_cd_form
from .decay import DecayReport, DecayRow, fit_decay_exponent
from .fourier_solver import expm, measure_linear_decay, propagate_linear, split_low_high
from .green_kernel_1d import K_hat, eval_K, measure_remainder
from .grid import Grid, GridField
from .nonlinear_sim import Trajectory, bump_data, measure_solution_decay, simulate
from .sk_analyzer import SKReport, estimate_dissipation_constant
from .spectral_expansion import check_expansion_residuals, expand_infinity, expand_zero
from .system_model import H1Report, RawSystem, assemble_symbol, make_builtin, validate_h1

__version__ = "0.1.0"

__all__ = [
    "CDSystem", "ChapmanEnskogOperators", "DecayReport", "DecayRow", "Grid", "GridField",
    "H1Report", "K_hat", "RawSystem", "SKReport", "Trajectory", "assemble_symbol",
    "build_chapman_enskog", "bump_data", "chapman_enskog_study", "check_expansion_residuals",
    "compare_chapman_enskog", "compare_to_linear", "estimate_dissipation_constant",
    "eval_K", "expand_infinity", "expand_zero", "expm", "fit_decay_exponent",
    "make_builtin", "measure_linear_decay", "measure_remainder", "measure_solution_decay",
    "projectors", "propagate_linear", "simulate", "solve_parabolic", "split_low_high",
    "to_cd_form", "validate_h1",
]
