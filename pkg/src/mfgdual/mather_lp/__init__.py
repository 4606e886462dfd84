"""Finite linear programs over discrete generalized Mather measures."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DomainError, InfeasibleError
from ..hamiltonians import HamiltonianSpec
from ..problem import ProblemData
from .assembly import (ROW_KINDS, _deposit, ConstraintSystem, DiscreteMeasure, MeasureGrid,
                       assemble_constraints, constraint_residuals, displacement_defect,
                       measure_cost_vector)
from .measures import (ConjugateBoundReport, _transport_chain, conjugate_test_family, induced_measure,
                       reference_measure, velocity_split, verify_conjugate_bound)
from .pdhg import DualCertificate, LPSolution, PrimalResult, pdhg_lp, solve_primal
from .simplex import SimplexResult, brute_force_lp_oracle, dense_simplex

__all__ = [
    "ROW_KINDS",
    "MeasureGrid",
    "DiscreteMeasure",
    "ConstraintSystem",
    "assemble_constraints",
    "constraint_residuals",
    "displacement_defect",
    "measure_cost_vector",
    "reference_measure",
    "induced_measure",
    "velocity_split",
    "verify_conjugate_bound",
    "conjugate_test_family",
    "ConjugateBoundReport",
    "solve_primal",
    "pdhg_lp",
    "PrimalResult",
    "LPSolution",
    "DualCertificate",
    "brute_force_lp_oracle",
    "dense_simplex",
    "SimplexResult",
    "h_value",
    "translated_terminal",
    "INFEASIBLE",
]

INFEASIBLE = math.inf


def translated_terminal(grid: MeasureGrid, data: ProblemData, shift: float, *,
                        mode: str = "transport") -> np.ndarray:
    """Node weights of ``m0`` translated by ``shift``.

    ``mode="transport"`` carries ``m0`` with constant velocity ``shift / T``
    through the same linear-deposition chain the LP uses, so the result is
    reachable whenever the displacement identity allows it.
    ``mode="sharp"`` deposits each node of ``m0`` at ``x_j + shift``
    directly; with ``Vmax dt < dx`` no discrete measure reaches it exactly,
    because every step leaves a geometric tail of mass behind. Both modes
    have mean ``mean(m0) + shift`` exactly.

    Raises
    ------
    DomainError
        If translated mass leaves ``[-R, R]``.
    ConfigError
        On an unknown mode or a velocity beyond ``Vmax``.
    """
    if mode == "transport":
        vel = np.full(grid.Nt, shift / grid.T)
        velocity_split(vel, grid, what="translation velocity")
        rho = data.sample_m0(grid.x, grid.dx) * grid.dx
        zero, one = np.zeros(grid.Nx + 1), np.ones(grid.Nx + 1)
        return _transport_chain(grid, rho, vel, lambda i: [(zero, one)], 1e-3,
                                "translated terminal").nu
    if mode != "sharp":
        raise ConfigError("mode must be 'transport' or 'sharp'", mode=mode)
    w = data.sample_m0(grid.x, grid.dx) * grid.dx
    y = grid.x + shift
    out_side = ((y < -grid.R - 1e-12) | (y > grid.R + 1e-12)) & (w > 0)
    if np.any(out_side):
        raise DomainError("translated density leaves [-R, R]; increase R", shift=shift, R=grid.R)
    jl, wl, wr = _deposit(y, grid)
    nu = np.zeros(grid.Nx + 1)
    np.add.at(nu, jl, w * wl)
    np.add.at(nu, jl + 1, w * wr)
    return nu


def h_value(grid: MeasureGrid, data: ProblemData, spec: HamiltonianSpec, nu_T: np.ndarray,
            *, tol: float = 1e-6, max_iter: int = 200000) -> float:
    """Optimal cost of reaching the terminal measure ``nu_T`` from ``m0``.

    Returns :data:`INFEASIBLE` (``+inf``) when the solver certifies that no
    measure connects ``m0`` to ``nu_T``.
    """
    cs = assemble_constraints(grid, data, spec, "fixed", nu_T)
    try:
        warm = reference_measure(grid, data)
    except (DomainError, ConfigError):  # the reference chain may not fit; start cold
        warm = None
    try:
        return solve_primal(cs, tol=tol, max_iter=max_iter, warm_start=warm).value
    except InfeasibleError:
        return INFEASIBLE
