"""Price-formation mean field games and their dual Mather-measure linear programs.

The package solves the coupled HJB / Fokker-Planck / balance system by
finite differences, solves the measure linear program over discrete
generalized Mather measures, and compares the two values along refinement
ladders.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .analysis import (MollifierPair, ResidualProfile, commutation_order_fit, lipschitz_estimate,
                       moment_trace, mollify_solution, subsolution_residual,
                       weak_convergence_diagnostic)
from .config import BUILTIN_CONFIGS, RunConfig, load_config, parse_config
from .duality import DualityReport, dual_value, gap_report, lift_mfg_dual, measure_cost
from .errors import (ConfigError, DomainError, InfeasibleError, MfgDualError, NonConvergenceError,
                     NumericalFailure, ResolutionError)
from .hamiltonians import (HamiltonianSpec, legendre_transform, make_hamiltonian, power_gamma2,
                           quadratic, validate_assumptions)
from .mfg_solver import (GridSpec, MFGSolution, fixed_point_solve, solve_fp_forward,
                         solve_hjb_backward, vanishing_viscosity_sweep)
from .problem import ProblemData, make_problem

__all__ = [
    "__version__",
    "HamiltonianSpec", "quadratic", "power_gamma2", "make_hamiltonian", "legendre_transform",
    "validate_assumptions",
    "ProblemData", "make_problem",
    "GridSpec", "MFGSolution", "solve_hjb_backward", "solve_fp_forward", "fixed_point_solve",
    "vanishing_viscosity_sweep",
    "dual_value", "measure_cost", "gap_report", "lift_mfg_dual", "DualityReport",
    "MollifierPair", "ResidualProfile", "mollify_solution", "subsolution_residual",
    "commutation_order_fit", "lipschitz_estimate", "moment_trace", "weak_convergence_diagnostic",
    "RunConfig", "load_config", "parse_config", "BUILTIN_CONFIGS",
    "MfgDualError", "ConfigError", "DomainError", "ResolutionError", "NonConvergenceError",
    "InfeasibleError", "NumericalFailure",
]
