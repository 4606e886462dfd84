"""Randomized small measure LPs shared by the oracle tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfgdual import make_problem, power_gamma2, quadratic
from mfgdual.hamiltonians import make_potential
from mfgdual.mather_lp import (MeasureGrid, assemble_constraints, reference_measure,
                               translated_terminal)
from mfgdual.mather_lp.assembly import ConstraintSystem
from mfgdual.problem import ProblemData


@dataclass
class Toy:
    seed: int
    kind: str          # "free", "fixed" or "infeasible"
    cs: ConstraintSystem
    data: ProblemData


def make_toy(seed: int) -> Toy:
    rng = np.random.default_rng(seed)
    kind = ("free", "free", "fixed", "infeasible")[seed % 4]
    Nt, Nx, Nv = int(rng.integers(2, 4)), int(rng.integers(3, 6)), int(rng.integers(2, 5))
    grid = MeasureGrid(1.0, 1.5, Nt, Nx, Nv, 2.0)
    q = float(rng.uniform(-0.6, 0.6))
    data = make_problem(1.0, {"name": "constant", "q": q},
                        {"name": "linear", "slope": float(rng.uniform(-1, 1))},
                        {"name": "bump", "center": float(rng.uniform(-0.3, 0.3)), "radius": 0.6})
    spec = (quadratic(), power_gamma2(1.5),
            quadratic(make_potential("smooth_abs", strength=0.5, width=1.0)))[seed % 3]
    if kind == "free":
        cs = assemble_constraints(grid, data, spec, "free")
    elif kind == "fixed":
        # the reference chain clips at the walls but stays exactly feasible
        nu = reference_measure(grid, data, max_blocked_mass=1.0).nu
        cs = assemble_constraints(grid, data, spec, "fixed", nu)
    else:
        # mean off by 0.4 from what the supply allows
        off = q + 0.4 if q < 0 else q - 0.4
        cs = assemble_constraints(grid, data, spec, "fixed",
                                  translated_terminal(grid, data, off, mode="sharp"))
    assert cs.A.shape[1] <= 200
    return Toy(seed, kind, cs, data)
