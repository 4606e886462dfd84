"""Equilibrium price for a periodic supply and along a viscosity sweep."""

from __future__ import annotations

import numpy as np

from mfgdual import (GridSpec, fixed_point_solve, lipschitz_estimate, load_config, moment_trace,
                     vanishing_viscosity_sweep)


def main() -> None:
    cfg = load_config("cosQ")
    g = GridSpec(1.0, 3.0, 64, 64)
    sol = fixed_point_solve(cfg.hamiltonian(), cfg.problem_data(), g, 0.0)
    # with zero terminal cost the price tracks minus the supply
    print("cos supply: t, varpi, -Q")
    for i in range(0, g.Nt + 1, 8):
        print(f"  {g.t[i]:.3f} {sol.varpi[i]: .6f} {-np.cos(2 * np.pi * g.t[i]): .6f}")

    cfg = load_config("potential")
    spec = cfg.hamiltonian()
    sw = vanishing_viscosity_sweep(spec, cfg.problem_data(), g, cfg.solver["eps_schedule"])
    print("potential instance: eps, Lipschitz(varpi), sup moment")
    for s in sw.solutions:
        mom = moment_trace(s.m, g, spec.gamma1 + 1.0).max()
        print(f"  {s.epsilon:.4f} {lipschitz_estimate(s.varpi, g.dt):.4f} {mom:.4f}")
    print("price increments:", ", ".join(f"{d:.2e}" for d in sw.price_increments))


if __name__ == "__main__":
    main()
