"""Primal LP against MFG value on the two linear-quadratic instances."""

from __future__ import annotations

from mfgdual import gap_report, load_config


def main() -> None:
    for name, exact in (("lq0", 0.5), ("lqlin", 1.5)):
        cfg = load_config(name)
        rep = gap_report(cfg.hamiltonian(), cfg.problem_data(), (16, 32, 64))
        print(f"{name}: exact value {exact}")
        print(f"  {'level':>10} {'primal':>10} {'dual':>10} {'gap':>11} {'lp iters':>9}")
        for h in rep.history:
            print(f"  {h.level:>10} {h.primal:10.6f} {h.dual:10.6f} {h.gap:11.3e} "
                  f"{h.lp_iterations:9d}")
        print(f"  checks: {rep.checks}")


if __name__ == "__main__":
    main()
