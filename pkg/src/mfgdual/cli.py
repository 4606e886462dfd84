"""Command-line front end.

Each subcommand runs one pipeline on a configuration file (or a built-in
configuration name), writes plot-ready CSV files, a summary JSON and a
``manifest.json`` into the output directory, and exits with a code that
tells configuration errors, non-convergence, infeasibility and numerical
failures apart. Any failure also writes ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from typing import Any, Callable

import numpy as np

from .analysis import commutation_order_fit, lipschitz_estimate, moment_trace
from .config import BUILTIN_CONFIGS, PIPELINES, RunConfig, load_config
from .duality import CSV_HEADER, dual_value, gap_report, measure_cost
from .errors import ConfigError, MfgDualError
from .hamiltonians import HAMILTONIAN_FAMILIES, POTENTIALS, lagrangian, validate_assumptions
from .io import ArtifactWriter, versions
from .mather_lp import (MeasureGrid, assemble_constraints, constraint_residuals,
                        displacement_defect, reference_measure, solve_primal, translated_terminal)
from .mfg_solver import GridSpec, fixed_point_solve, vanishing_viscosity_sweep
from .problem import DENSITY_FORMULAS, SUPPLY_FORMULAS, TERMINAL_FORMULAS, make_density

__all__ = ["main", "run", "list_builtins", "EXIT_OK", "EXIT_INTERNAL"]

log = logging.getLogger("mfgdual")

EXIT_OK = 0
EXIT_INTERNAL = 1


# --------------------------------------------------------------------------
# pipelines: each writes its files and returns the summary
# --------------------------------------------------------------------------


def _mfg_grid(cfg: RunConfig) -> GridSpec:
    g = cfg.grid
    return GridSpec(cfg.problem["T"], g["R"], int(g["Nt"]), int(g["Nx"]))


def _measure_grid(cfg: RunConfig) -> MeasureGrid:
    g = cfg.grid
    return MeasureGrid(cfg.problem["T"], g["R"], int(g["Nt"]), int(g["Nx"]), int(g["Nv"]), g["Vmax"])


def _pipe_validate(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    rep = validate_assumptions(cfg.hamiltonian(), cfg.problem_data())
    w.write_json("assumptions.json", rep.to_dict())
    w.write_csv("assumptions.csv", ("check", "status", "margin"),
                ((k, c.status, c.margin) for k, c in rep.checks.items()))
    if not rep.all_passed:
        raise ConfigError("standing assumptions fail", failed=rep.failed())
    return {"all_passed": True, "checks": {k: c.status for k, c in rep.checks.items()}}


def _pipe_solve(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    s = cfg.solver
    spec, data, grid = cfg.hamiltonian(), cfg.problem_data(), _mfg_grid(cfg)
    sol = fixed_point_solve(spec, data, grid, float(s["epsilon"]), s["damping"], s["tol"],
                            int(s["max_iter"]))
    w.write_csv("price.csv", ("t", "varpi", "balance_residual"),
                zip(grid.t, sol.varpi, sol.balance_residual))
    w.write_csv("solution.csv", ("t", "x", "u", "m"),
                ((grid.t[i], grid.x[j], sol.u[i, j], sol.m[i, j])
                 for i in range(grid.Nt + 1) for j in range(grid.Nx + 1)))
    mass = sol.m.sum(axis=1) * grid.dx
    return {"epsilon": sol.epsilon, "iterations": sol.iterations,
            "max_balance_residual": sol.max_residual,
            "dual_value": dual_value(sol, data),
            "lipschitz": lipschitz_estimate(sol.varpi, grid.dt),
            "max_mass_error": float(np.max(np.abs(mass - 1.0)))}


def _pipe_sweep(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    s = cfg.solver
    spec, data, grid = cfg.hamiltonian(), cfg.problem_data(), _mfg_grid(cfg)
    sweep = vanishing_viscosity_sweep(spec, data, grid, s["eps_schedule"], s["damping"],
                                      s["tol"], int(s["max_iter"]))
    gamma = spec.gamma1 + 1.0
    lips = [lipschitz_estimate(sol.varpi, grid.dt) for sol in sweep.solutions]
    moments = [moment_trace(sol.m, grid, gamma) for sol in sweep.solutions]
    sups = [float(mt.max()) for mt in moments]
    w.write_csv("sweep.csv", ("epsilon", "iterations", "lipschitz", "sup_moment",
                              "max_balance_residual", "dual_value"),
                ((sol.epsilon, sol.iterations, lip, sm, sol.max_residual, dual_value(sol, data))
                 for sol, lip, sm in zip(sweep.solutions, lips, sups)))
    eps_cols = [f"varpi_eps_{e:g}" for e in sweep.schedule]
    w.write_csv("prices.csv", ("t", *eps_cols, "varpi_extrapolated"),
                zip(grid.t, *(sol.varpi for sol in sweep.solutions), sweep.extrapolated.varpi))
    w.write_csv("moments.csv", ("t", *[f"moment_eps_{e:g}" for e in sweep.schedule]),
                zip(grid.t, *moments))
    return {"schedule": sweep.schedule, "gamma_moment": gamma,
            "lipschitz": lips, "lipschitz_ratio": max(lips) / max(min(lips), 1e-300),
            "sup_moments": sups, "moment_ratio": max(sups) / sups[0],
            "price_increments": sweep.price_increments,
            "dual_value_extrapolated": dual_value(sweep.extrapolated, data)}


def _terminal_from_config(cfg: RunConfig, grid: MeasureGrid) -> np.ndarray:
    spec = dict(cfg.lp["nu_T"])
    kind = spec.pop("kind", "translate")
    data = cfg.problem_data()
    if kind == "translate":
        return translated_terminal(grid, data, float(spec.get("shift", data.integral_Q())),
                                   mode=spec.get("mode", "transport"))
    if kind == "density":
        dens = make_density(spec.pop("name", "bump"), **spec)
        w = np.asarray(dens(grid.x), dtype=float)
        if not w.sum() > 0:
            raise ConfigError("terminal density has no mass on the grid")
        return w / w.sum()
    raise ConfigError(f"unknown nu_T kind {kind!r}", known=["translate", "density"])


def _pipe_lp(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    s = cfg.solver
    spec, data, grid = cfg.hamiltonian(), cfg.problem_data(), _measure_grid(cfg)
    mode = cfg.lp["nu_mode"]
    nu_T = _terminal_from_config(cfg, grid) if mode == "fixed" else None
    cs = assemble_constraints(grid, data, spec, mode, nu_T)
    try:
        ref = reference_measure(grid, data)
    except ConfigError:
        ref = None
    res = solve_primal(cs, tol=s["lp_tol"], max_iter=int(s["lp_max_iter"]), warm_start=ref)
    mu = res.measure
    w.write_csv("measure.csv", ("t", "x", "v", "weight"), mu.to_records(threshold=1e-14))
    w.write_csv("terminal.csv", ("x", "nu"), zip(grid.x, mu.nu))
    w.write_csv("lp_history.csv", ("iter", "primal_residual", "dual_residual", "gap", "kkt"),
                ((h["iter"], h["primal"], h["dual"], h["gap"], h["kkt"]) for h in res.lp.history))
    lview = lagrangian(spec)
    return {"value": res.value, "dual_value": res.certificate.dual_value,
            "iterations": res.lp.iterations, "nu_mode": mode,
            "residuals": constraint_residuals(cs, mu),
            "min_reduced_cost": res.certificate.min_reduced_cost,
            "reference_cost": measure_cost(ref, lview, data.u_T_prime) if ref else None,
            "displacement_defect": displacement_defect(grid, data, mu.nu),
            "rows": cs.A.shape[0], "columns": cs.A.shape[1]}


def _pipe_duality(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    s, g = cfg.solver, cfg.grid
    rep = gap_report(cfg.hamiltonian(), cfg.problem_data(), g["levels"], s["eps_schedule"],
                     R=g["R"], Vmax=g["Vmax"], nv_ratio=g["Nv"] / g["Nt"], lp_tol=s["lp_tol"],
                     lp_max_iter=int(s["lp_max_iter"]), mfg_tol=s["tol"],
                     mfg_max_iter=int(s["max_iter"]), damping=s["damping"],
                     warm_dual=bool(s["warm_dual"]), workers=threads)
    w.write_csv("duality.csv", CSV_HEADER,
                ([h.level] + [getattr(h, k) for k in CSV_HEADER[1:]] for h in rep.history))
    w.write_json("duality.json", rep.to_dict())
    return {"primal_value": rep.primal_value, "dual_value": rep.dual_value, "gap": rep.gap,
            "relative_gap": rep.relative_gap, "checks": rep.checks}


def _pipe_commutation(cfg: RunConfig, w: ArtifactWriter, threads: int) -> dict[str, Any]:
    s, c = cfg.solver, cfg.commutation
    spec, data = cfg.hamiltonian(), cfg.problem_data()
    grid = GridSpec(cfg.problem["T"], c["R"], int(c["Nt"]), int(c["Nx"]))
    sol = fixed_point_solve(spec, data, grid, float(s["epsilon"]), s["damping"], s["tol"],
                            int(s["max_iter"]))
    prof = commutation_order_fit(spec, sol, c["alphas"])
    w.write_text("residuals.csv", prof.to_csv())
    w.write_json("commutation.json", prof.to_dict())
    return {"fitted_order": prof.fitted_order, "fitted_constant": prof.fitted_constant,
            "at_floor": prof.at_floor, "alphas": prof.alphas, "sup_residuals": prof.sup_residuals}


PIPELINE_FUNCS: dict[str, Callable[[RunConfig, ArtifactWriter, int], dict[str, Any]]] = {
    "validate": _pipe_validate,
    "solve": _pipe_solve,
    "sweep": _pipe_sweep,
    "lp": _pipe_lp,
    "duality": _pipe_duality,
    "commutation": _pipe_commutation,
}


def run(cfg: RunConfig, out_dir: str | None = None, *, threads: int = 1,
        seed: int | None = None) -> int:
    """Execute the configured pipeline and write its artifacts.

    Returns the process exit code; failures are reported through
    ``error.json`` rather than raised.
    """
    w = ArtifactWriter(out_dir or cfg.output)
    seed = cfg.seed if seed is None else seed
    np.random.seed(seed)        # no pipeline draws random numbers; fixed for any future one
    manifest: dict[str, Any] = {"pipeline": cfg.pipeline, "config": cfg.raw, "source": cfg.source,
                                "seed": seed, "threads": threads, "versions": versions()}
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        summary = PIPELINE_FUNCS[cfg.pipeline](cfg, w, threads)
        w.write_json("summary.json", summary)
        manifest["status"] = "ok"
    except MfgDualError as exc:
        code = exc.exit_code
        w.write_json("error.json", exc.to_dict())
        manifest["status"] = exc.kind
        log.error("%s: %s", type(exc).__name__, exc.message)
    except Exception as exc:  # noqa: BLE001 - report anything unexpected as JSON too
        code = EXIT_INTERNAL
        w.write_json("error.json", {"kind": "internal", "type": type(exc).__name__,
                                    "message": str(exc), "exit_code": code, "details": {}})
        manifest["status"] = "internal"
        log.exception("unexpected failure")
    manifest["exit_code"] = code
    manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    w.write_manifest(manifest)
    return code


def list_builtins() -> dict[str, Any]:
    """Registered Hamiltonian families, formulas and example configurations."""
    return {
        "hamiltonian_families": sorted(HAMILTONIAN_FAMILIES),
        "potentials": sorted(POTENTIALS),
        "supply_formulas": sorted(SUPPLY_FORMULAS),
        "terminal_formulas": sorted(TERMINAL_FORMULAS),
        "density_formulas": sorted(DENSITY_FORMULAS),
        "example_configs": sorted(BUILTIN_CONFIGS),
        "pipelines": list(PIPELINES),
    }


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfgdual", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        sp = sub.add_parser(name, help=f"run the {name} pipeline")
        sp.add_argument("--config", required=True,
                        help="YAML/JSON config file or a built-in name (see list-builtins)")
        sp.add_argument("--out", default=None, help="output directory (default: config 'output')")
        sp.add_argument("--threads", type=int, default=1, help="refinement levels run concurrently")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    lb = sub.add_parser("list-builtins", help="print registered names and example configs")
    lb.add_argument("--json", action="store_true", help="emit JSON")
    lb.add_argument("--show", default=None, metavar="NAME", help="print one example config as YAML")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-builtins":
        if args.show:
            try:
                print(load_config(args.show).to_yaml(), end="")
            except ConfigError as exc:
                print(json.dumps(exc.to_dict()), file=sys.stderr)
                return exc.exit_code
            return EXIT_OK
        reg = list_builtins()
        if args.json:
            print(json.dumps(reg, indent=2))
        else:
            for key, names in reg.items():
                print(f"{key}: {', '.join(names)}")
        return EXIT_OK
    try:
        cfg = load_config(args.config).with_pipeline(args.command)
    except ConfigError as exc:
        # no output directory is known yet when the config itself is broken
        w = ArtifactWriter(args.out or "out")
        w.write_json("error.json", exc.to_dict())
        w.write_manifest({"pipeline": args.command, "status": exc.kind,
                          "exit_code": exc.exit_code, "source": args.config})
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return exc.exit_code
    return run(cfg, args.out, threads=args.threads, seed=args.seed)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
