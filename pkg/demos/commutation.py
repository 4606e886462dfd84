"""Decay of the mollified subsolution residual with the mollifier radius."""

from __future__ import annotations

from mfgdual import GridSpec, commutation_order_fit, fixed_point_solve, load_config


def main() -> None:
    g = GridSpec(1.0, 1.5, 160, 240)
    for name in ("cosQ", "lq0"):
        cfg = load_config(name)
        spec = cfg.hamiltonian()
        sol = fixed_point_solve(spec, cfg.problem_data(), g, 0.0)
        prof = commutation_order_fit(spec, sol, (0.2, 0.1, 0.05, 0.025))
        print(f"{name}: order {prof.fitted_order:.3f} at_floor={prof.at_floor}")
        for a, r in zip(prof.alphas, prof.sup_residuals):
            print(f"  alpha {a:.3f}  sup residual {r:.3e}")


if __name__ == "__main__":
    main()
