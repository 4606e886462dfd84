"""Both sides of the MFG / Mather-measure duality and the gap report.

The dual side is ``int (u(0) - u_T) dm0 - int Q varpi dt`` evaluated on a
finite-difference MFG solution; the primal side is the optimum of the
measure LP. The two are discretized independently, so their agreement
under refinement is evidence rather than construction.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConfigError, MfgDualError, _jsonable
from .hamiltonians import HamiltonianSpec, LagrangianView, SampleBox, lagrangian, validate_assumptions
from .mather_lp import (ConstraintSystem, DiscreteMeasure, MeasureGrid, assemble_constraints,
                        brute_force_lp_oracle, constraint_residuals, induced_measure,
                        reference_measure, solve_primal)
from .mfg_solver import GridSpec, MFGSolution, fixed_point_solve, vanishing_viscosity_sweep
from .problem import ProblemData

__all__ = [
    "dual_value",
    "measure_cost",
    "LiftedDual",
    "lift_mfg_dual",
    "wasserstein1",
    "LevelResult",
    "DualityReport",
    "gap_report",
    "CSV_HEADER",
]

CSV_HEADER = ("level", "h", "dt", "dx", "dv", "primal", "dual", "gap")


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def dual_value(sol: MFGSolution, data: ProblemData) -> float:
    """``int (u(0, x) - u_T(x)) dm0(x) - int_0^T Q(t) varpi(t) dt``.

    Both integrals use the trapezoid rule on the solution grid; ``m0`` is
    sampled and normalized to unit mass with the same weights.
    """
    g = sol.grid
    wx = _trapezoid_weights(g.Nx + 1, g.dx)
    m0 = np.asarray(data.m0_density(g.x), dtype=float)
    m0 = m0 / float(wx @ m0)
    space = float(wx @ ((sol.u[0] - np.asarray(data.u_T(g.x), dtype=float)) * m0))
    wt = _trapezoid_weights(g.Nt + 1, g.dt)
    return space - float(wt @ (data.sample_Q(g.t) * sol.varpi))


def measure_cost(measure: DiscreteMeasure, lview: LagrangianView,
                 u_T_prime: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sum_cells (L(x_j, v_k) + v_k u_T'(x_j)) mu[i, j, k]``."""
    g = measure.grid
    X, V = np.meshgrid(g.x, g.v, indexing="ij")
    cell = np.asarray(lview.eval_L(X, V), dtype=float) + V * np.asarray(u_T_prime(X), dtype=float)
    return float(np.einsum("ijk,jk->", measure.mu, cell))


@dataclass
class LiftedDual:
    """LP multipliers built from an MFG solution.

    ``y`` satisfies ``A^T y <= c`` up to round-off (``min_reduced_cost``),
    so ``value = b.y`` is a lower bound on the LP optimum.
    """

    y: np.ndarray
    value: float
    min_reduced_cost: float


def lift_mfg_dual(cs: ConstraintSystem, sol: MFGSolution, data: ProblemData) -> LiftedDual:
    """Dual-feasible LP multipliers from ``(u, varpi)``.

    Holonomy multipliers are ``(u_T - u) / dt`` at the time nodes, balance
    multipliers ``-varpi`` at cell midpoints; slice-mass and terminal-mass
    multipliers are then the smallest reduced costs of their columns, which
    makes every reduced cost nonnegative.

    Raises
    ------
    ConfigError
        If the MFG and measure grids differ.
    """
    g, mg = cs.grid, sol.grid
    if (g.Nt, g.Nx) != (mg.Nt, mg.Nx) or not np.isclose(g.R, mg.R) or not np.isclose(g.T, mg.T):
        raise ConfigError("MFG grid and measure grid are not compatible",
                          mfg=(mg.T, mg.R, mg.Nt, mg.Nx), measure=(g.T, g.R, g.Nt, g.Nx))
    y = np.zeros(cs.A.shape[0])
    uT = np.asarray(data.u_T(g.x), dtype=float)
    y[cs.rows_of("holonomy")] = ((uT[None, :] - sol.u) / g.dt).ravel()
    y[cs.rows_of("balance")] = -0.5 * (sol.varpi[1:] + sol.varpi[:-1])
    AT = cs.A.T.tocsr()
    n_mu = cs.n_mu
    slice_of = cs.columns // ((g.Nx + 1) * (g.Nv + 1))
    rc = cs.c - AT @ y
    s = np.full(g.Nt, np.inf)
    np.minimum.at(s, slice_of, rc[:n_mu])
    y[cs.rows_of("slice-mass")] = s
    if cs.nu_mode == "free":
        rc = cs.c - AT @ y
        y[cs.rows_of("terminal-mass")] = rc[n_mu:].min()
    rc = cs.c - AT @ y
    return LiftedDual(y, float(cs.b @ y), float(rc.min()))


def wasserstein1(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """W1 distance between two node-weight vectors on a uniform 1-d grid."""
    a = np.asarray(a, dtype=float) / float(np.sum(a))
    b = np.asarray(b, dtype=float) / float(np.sum(b))
    dx = float(x[1] - x[0])
    return float(np.sum(np.abs(np.cumsum(a - b))[:-1]) * dx)


@dataclass
class LevelResult:
    """One refinement level of the gap report."""

    level: str
    h: float
    dt: float
    dx: float
    dv: float
    primal: float
    dual: float
    gap: float
    relative_gap: float
    dual_eps0: float
    reference_cost: float | None
    induced_cost: float
    lifted_bound: float
    w1_terminal: float | None
    residuals: dict[str, float]
    sandwich: dict[str, bool]
    lp_iterations: int
    lp_seconds: float
    mfg_seconds: float


@dataclass
class DualityReport:
    """Primal LP optimum against the MFG value along a refinement ladder.

    The headline fields describe the finest level; ``history`` holds every
    level in ladder order. ``gap = primal_value - dual_value``.
    """

    primal_value: float
    dual_value: float
    gap: float
    relative_gap: float
    residuals: dict[str, float]
    grid: dict[str, float]
    history: list[LevelResult]
    checks: dict[str, bool] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["history"] = [asdict(h) for h in self.history]
        return _jsonable(out)

    def to_json(self, **kw: Any) -> str:
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for h in self.history:
            w.writerow([h.level] + [repr(float(getattr(h, k))) for k in CSV_HEADER[1:]])
        return buf.getvalue()


def _gap_decreasing(gaps: Sequence[float], floor: float) -> bool:
    """``|gap|`` decreases along the ladder or stays below ``floor``."""
    g = np.abs(np.asarray(gaps, dtype=float))
    return bool(all(b <= a or b <= floor for a, b in zip(g, g[1:])))


def _parse_level(level, nv_ratio: float) -> tuple[int, int, int]:
    if isinstance(level, (int, np.integer)):
        n = int(level)
        return n, n, max(2, int(round(n * nv_ratio)))
    nt, nx, nv = (int(k) for k in level)
    return nt, nx, nv


def _run_level(spec: HamiltonianSpec, data: ProblemData, dims: tuple[int, int, int],
               eps_schedule: Sequence[float], R: float, Vmax: float, lp_method: str,
               lp_tol: float, lp_max_iter: int, mfg_tol: float, mfg_max_iter: int,
               damping: float, warm_dual: bool, sandwich_tol: float,
               max_blocked_mass: float) -> LevelResult:
    nt, nx, nv = dims
    t0 = time.perf_counter()
    mgrid = GridSpec(data.T, R, nt, nx)
    if eps_schedule:
        sweep = vanishing_viscosity_sweep(spec, data, mgrid, eps_schedule, damping, mfg_tol,
                                          mfg_max_iter)
        dual_sol, warm = sweep.extrapolated, sweep.extrapolated.varpi
    else:
        dual_sol, warm = None, None
    # the inviscid solve induces an exactly transported measure
    sol0 = fixed_point_solve(spec, data, mgrid, 0.0, damping, mfg_tol, mfg_max_iter, warm)
    dual_sol = dual_sol or sol0
    mfg_seconds = time.perf_counter() - t0

    grid = MeasureGrid(data.T, R, nt, nx, nv, Vmax)
    cs = assemble_constraints(grid, data, spec, "free")
    lview = lagrangian(spec)
    ind = induced_measure(sol0, grid, spec, data, max_blocked_mass=max_blocked_mass)
    induced_cost = measure_cost(ind, lview, data.u_T_prime)
    try:
        ref = reference_measure(grid, data, max_blocked_mass=max_blocked_mass)
        reference_cost = measure_cost(ref, lview, data.u_T_prime)
    except ConfigError:         # supply outside the velocity grid or hitting the walls
        ref, reference_cost = None, None
    lifted = lift_mfg_dual(cs, sol0, data)

    t1 = time.perf_counter()
    if lp_method == "oracle":
        primal, iters, residuals, w1 = brute_force_lp_oracle(cs), 0, {}, None
    else:
        res = solve_primal(cs, tol=lp_tol, max_iter=lp_max_iter, warm_start=ref or ind,
                           dual_start=lifted.y if warm_dual else None)
        primal, iters = res.value, res.lp.iterations
        residuals = constraint_residuals(cs, res.measure)
        w1 = wasserstein1(grid.x, res.measure.nu, sol0.m[-1] * mgrid.dx)
    lp_seconds = time.perf_counter() - t1

    dual = dual_value(dual_sol, data)
    gap = primal - dual
    slack = sandwich_tol * (1.0 + abs(primal))
    sandwich = {
        "primal<=induced": primal <= induced_cost + slack,
        "dual<=induced": dual <= induced_cost + slack,
        "lifted<=primal": lifted.value <= primal + slack,
    }
    if reference_cost is not None:
        sandwich["primal<=reference"] = primal <= reference_cost + slack
    return LevelResult(
        level=f"{nt}x{nx}x{nv}", h=max(grid.dt, grid.dx, grid.dv), dt=grid.dt, dx=grid.dx,
        dv=grid.dv, primal=primal, dual=dual, gap=gap, relative_gap=abs(gap) / max(1.0, abs(dual)),
        dual_eps0=dual_value(sol0, data), reference_cost=reference_cost,
        induced_cost=induced_cost, lifted_bound=lifted.value, w1_terminal=w1,
        residuals=residuals, sandwich=sandwich, lp_iterations=iters, lp_seconds=lp_seconds,
        mfg_seconds=mfg_seconds)


def gap_report(spec: HamiltonianSpec, data: ProblemData, levels: Sequence = (16, 32, 64),
               eps_schedule: Sequence[float] = (0.1, 0.05, 0.025, 0.0125), *,
               R: float = 3.0, Vmax: float = 2.0, nv_ratio: float = 0.5,
               lp_method: str = "pdhg", lp_tol: float = 1e-6, lp_max_iter: int = 200000,
               mfg_tol: float = 1e-8, mfg_max_iter: int = 200, damping: float = 0.5,
               warm_dual: bool = True, sandwich_tol: float = 1e-5, gap_floor: float = 1e-5,
               validate: bool = True, box: SampleBox | None = None,
               workers: int = 1, max_blocked_mass: float = 1e-3) -> DualityReport:
    """Primal and dual values along a refinement ladder.

    At each level the MFG system is solved along ``eps_schedule`` and the
    dual value is taken from the Richardson-extrapolated price path (the
    inviscid solve is used when the schedule is empty). The inviscid
    solution also provides the induced measure for the sandwich checks and
    a lifted dual start for the LP, which is solved in free-terminal mode.

    Parameters
    ----------
    levels : sequence
        Integers ``N`` (``Nt = Nx = N``, ``Nv = nv_ratio N``) or explicit
        ``(Nt, Nx, Nv)`` triples, coarse to fine.
    lp_method : {"pdhg", "oracle"}
        ``"oracle"`` solves the LP with the dense simplex (toy sizes only).
    warm_dual : bool
        Start PDHG from the lifted MFG multipliers. Convergence is judged on
        the LP residuals alone, so this changes run time, not the optimum.
    workers : int
        Levels solved concurrently in threads.
    max_blocked_mass : float
        Mass the induced and reference chains may clip at the walls. The
        clipped chains stay exactly feasible; raise it for toy grids.

    Raises
    ------
    ConfigError
        If the assumptions fail (with ``validate``) or the inputs are invalid.
    MfgDualError
        Solver failures, annotated with the failing level.
    """
    if lp_method not in ("pdhg", "oracle"):
        raise ConfigError("lp_method must be 'pdhg' or 'oracle'", lp_method=lp_method)
    if not levels:
        raise ConfigError("need at least one refinement level")
    if validate:
        rep = validate_assumptions(spec, data, box or SampleBox())
        if not rep.all_passed:
            raise ConfigError("standing assumptions fail", failed=rep.failed())
    dims = [_parse_level(lv, nv_ratio) for lv in levels]
    eps = tuple(float(e) for e in eps_schedule)

    def run(d):
        try:
            return _run_level(spec, data, d, eps, R, Vmax, lp_method, lp_tol, lp_max_iter,
                              mfg_tol, mfg_max_iter, damping, warm_dual, sandwich_tol,
                              max_blocked_mass)
        except MfgDualError as exc:
            exc.details["level"] = "x".join(map(str, d))
            raise

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            history = list(pool.map(run, dims))
    else:
        history = [run(d) for d in dims]

    fin = history[-1]
    checks = {
        "gap_decreasing": _gap_decreasing([h.gap for h in history], gap_floor),
        "sandwich": all(all(h.sandwich.values()) for h in history),
    }
    config = {"levels": ["x".join(map(str, d)) for d in dims], "eps_schedule": list(eps),
              "R": R, "Vmax": Vmax, "lp_method": lp_method, "lp_tol": lp_tol,
              "warm_dual": warm_dual, "problem": data.name, "hamiltonian": spec.name}
    return DualityReport(
        primal_value=fin.primal, dual_value=fin.dual, gap=fin.gap,
        relative_gap=fin.relative_gap, residuals=fin.residuals,
        grid={"T": data.T, "R": R, "Vmax": Vmax, "dt": fin.dt, "dx": fin.dx, "dv": fin.dv},
        history=history, checks=checks, config=config)
