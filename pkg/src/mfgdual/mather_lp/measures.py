"""Constructors of feasible measures and the conjugate-bound check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..errors import ConfigError, DomainError
from ..hamiltonians import HamiltonianSpec
from ..mfg_solver import MFGSolution, upwind_speeds
from ..problem import ProblemData
from .assembly import DiscreteMeasure, MeasureGrid, _deposit

__all__ = [
    "reference_measure",
    "induced_measure",
    "velocity_split",
    "ConjugateBoundReport",
    "verify_conjugate_bound",
    "conjugate_test_family",
]


def velocity_split(v: np.ndarray, grid: MeasureGrid, *, what: str = "velocity") -> tuple[np.ndarray, np.ndarray]:
    """Left velocity-node index and right weight of the linear split of ``v``.

    Raises
    ------
    ConfigError
        If a velocity lies outside ``[-Vmax, Vmax]``.
    """
    v = np.asarray(v, dtype=float)
    tol = 1e-12 * grid.Vmax
    if np.any(np.abs(v) > grid.Vmax + tol):
        bad = float(v.flat[int(np.argmax(np.abs(v)))])
        raise ConfigError(f"{what} outside the velocity grid; increase Vmax",
                          velocity=bad, Vmax=grid.Vmax)
    s = np.clip((v + grid.Vmax) / grid.dv, 0.0, grid.Nv)
    kl = np.minimum(np.floor(s).astype(np.int64), grid.Nv - 1)
    return kl, s - kl


def _push(rho: np.ndarray, vel_w: list[tuple[np.ndarray, np.ndarray]], grid: MeasureGrid,
          slice_index: int) -> np.ndarray:
    """Deposit node masses moving with the given (velocity, fraction) pairs."""
    x, dt = grid.x, grid.dt
    out = np.zeros_like(rho)
    for vel, frac in vel_w:
        y = x + vel * dt
        mass = rho * frac
        outside = (y < -grid.R - 1e-12) | (y > grid.R + 1e-12)
        if np.any(outside & (mass > 0)):
            j = int(np.argmax(outside & (mass > 0)))
            raise DomainError("support leaves [-R, R]; increase R", slice=slice_index,
                              x=float(x[j]), landing=float(y[j]), R=grid.R)
        jl, wl, wr = _deposit(y, grid)
        np.add.at(out, jl, mass * wl)
        np.add.at(out, jl + 1, mass * wr)
    return out


def _balanced_shift(parts: list[tuple[np.ndarray, np.ndarray]], rho: np.ndarray,
                    target: float, lo: np.ndarray, hi: np.ndarray) -> float:
    """Shift d with ``sum rho frac clip(v + d, lo, hi) = target``, or nan."""
    total = float(rho.sum())

    def f(d):
        return sum(float(np.dot(rho * fr, np.clip(v + d, lo, hi))) for v, fr in parts) - target * total

    a = float(lo.min() - max(v.max() for v, _ in parts))
    b = float(hi.max() - min(v.min() for v, _ in parts))
    fa, fb = f(a), f(b)
    if fa > 0 or fb < 0:
        return np.nan
    if fa == 0 or fb == 0:
        return a if fa == 0 else b
    return brentq(f, a, b, xtol=1e-15, rtol=1e-15)


def _transport_chain(grid: MeasureGrid, rho: np.ndarray, Q: np.ndarray, velocity_parts,
                     max_blocked_mass: float, what: str) -> DiscreteMeasure:
    """Push node masses through the slices with balanced velocities.

    ``velocity_parts(i)`` returns (velocity, fraction) pairs per node whose
    fractions sum to one. Each slice shifts all velocities by one constant
    so the slice mean equals ``Q[i]``; velocities whose landing would leave
    the domain are clipped to the extreme admissible grid velocity and the
    shift absorbs the difference, so holonomy and balance hold to round-off.
    """
    dt, v = grid.dt, grid.v
    mu = np.zeros(grid.shape)
    cols = np.arange(grid.Nx + 1)
    ok = grid.landing_mask()
    hi = np.array([v[np.nonzero(r)[0].max()] for r in ok])
    lo = np.array([v[np.nonzero(r)[0].min()] for r in ok])
    shifts = np.zeros(grid.Nt)
    for i in range(grid.Nt):
        parts = velocity_parts(i)
        d = _balanced_shift(parts, rho, float(Q[i]), lo, hi)
        if not np.isfinite(d):
            raise DomainError(f"{what}: no admissible velocities match the supply; "
                              "increase Vmax or R", slice=i, Q=float(Q[i]))
        blocked = sum(float(np.sum((rho * fr)[(vel + d < lo) | (vel + d > hi)])) for vel, fr in parts)
        if blocked > max_blocked_mass:
            raise DomainError(f"{what}: support reaches the walls; increase R", slice=i,
                              blocked_mass=blocked, R=grid.R)
        shifts[i] = d
        pushed = []
        for vel, fr in parts:
            kl, wr = velocity_split(np.clip(vel + d, lo, hi), grid, what=what)
            np.add.at(mu[i], (cols, kl), dt * rho * fr * (1.0 - wr))
            np.add.at(mu[i], (cols, kl + 1), dt * rho * fr * wr)
            pushed += [(v[kl], fr * (1.0 - wr)), (v[np.minimum(kl + 1, grid.Nv)], fr * wr)]
        rho = _push(rho, pushed, grid, i)
    return DiscreteMeasure(grid, mu, rho, info={"velocity_shift": shifts})


def reference_measure(grid: MeasureGrid, data: ProblemData, *,
                      max_blocked_mass: float = 1e-3) -> DiscreteMeasure:
    """Feasible measure translating ``m0`` with the supply as common velocity.

    Every node of slice i moves with velocity ``Q`` at the cell center,
    deposited linearly on the two neighbouring velocity nodes, and the
    x-marginal is pushed forward node by node; ``nu`` is the marginal after
    the last slice. Linear deposition spreads the support by one node per
    step, so nodes whose landing would leave the domain are slowed to the
    largest admissible grid velocity and the others speed up to keep the
    slice mean at ``Q``. The holonomy and balance rows then hold to
    round-off.

    Raises
    ------
    DomainError
        If more than ``max_blocked_mass`` has to be slowed at the walls.
    ConfigError
        If the supply exceeds ``Vmax``.
    """
    Q = data.sample_Q(grid.t_centers)
    velocity_split(Q, grid, what="supply")
    rho = data.sample_m0(grid.x, grid.dx) * grid.dx
    zero = np.zeros(grid.Nx + 1)
    one = np.ones(grid.Nx + 1)
    return _transport_chain(grid, rho, Q, lambda i: [(zero, one)], max_blocked_mass,
                            "reference measure")


def induced_measure(sol: MFGSolution, grid: MeasureGrid, spec: HamiltonianSpec,
                    data: ProblemData, *, max_blocked_mass: float = 1e-3) -> DiscreteMeasure:
    """Measure generated by the MFG feedback velocity ``-H_p(x, varpi + u_x)``.

    Slice i uses the upwind speeds that move the density from ``t_i`` to
    ``t_{i+1}``. A node whose mass is sent both ways (``alpha > 0 > beta``)
    is split into a left-moving and a right-moving part with the same mean
    velocity, so each part lands in a neighbouring cell; without diffusion
    this reproduces the discrete Fokker-Planck step. The node masses are
    pushed forward by these velocities starting from ``m0``, and each slice
    is shifted by the constant that makes its mean velocity equal the supply
    at the cell center (the shift is ``O(dt)`` for a converged solution and
    is recorded in ``info["velocity_shift"]``), so the result is feasible
    for the measure LP to round-off.

    Raises
    ------
    ConfigError
        On a grid mismatch or a velocity outside ``[-Vmax, Vmax]``.
    DomainError
        If the chain reaches the walls with more than ``max_blocked_mass``.
    """
    g = sol.grid
    if (g.Nt, g.Nx) != (grid.Nt, grid.Nx) or not np.isclose(g.T, grid.T) or not np.isclose(g.R, grid.R):
        raise ConfigError("MFG grid and measure grid are not compatible",
                          mfg=(g.T, g.R, g.Nt, g.Nx), measure=(grid.T, grid.R, grid.Nt, grid.Nx))
    x, dx = grid.x, grid.dx

    def parts(i):
        alpha, beta = upwind_speeds(spec, x, sol.varpi[i + 1], sol.u[i + 1], dx, sol.boundary_slopes)
        total = alpha - beta
        split = (alpha > 0) & (beta < 0)
        fl = np.where(split, alpha / np.where(split, total, 1.0), 1.0)
        out = [(np.where(split, -total, -(alpha + beta)), fl)]
        if np.any(split):
            out.append((np.where(split, total, 0.0), np.where(split, 1.0 - fl, 0.0)))
        for vel, _ in out:
            velocity_split(vel, grid, what="MFG velocity")
        return out

    Q = data.sample_Q(grid.t_centers)
    rho = data.sample_m0(x, dx) * dx
    return _transport_chain(grid, rho, Q, parts, max_blocked_mass, "induced measure")


@dataclass
class ConjugateBoundReport:
    """Margins ``int phi dmu - f(phi) - int c dmu`` for a family of test functions.

    The conjugate inequality says every margin is ``<= 0`` for measures with
    total mass T; ``tightest`` is the index of the largest margin.
    """

    margins: np.ndarray
    max_margin: float
    tightest: int
    holds: bool
    measure_cost: float


def verify_conjugate_bound(measure: DiscreteMeasure, cost: np.ndarray,
                           test_functions: list[np.ndarray], *,
                           tol: float = 1e-10) -> ConjugateBoundReport:
    """Check ``int phi dmu - T sup(phi - c) <= int c dmu`` for each ``phi``.

    Parameters
    ----------
    cost : array
        Cell costs ``L + v u_T'`` broadcastable to the measure grid.
    test_functions : list of arrays
        Functions on the grid (broadcastable to ``(Nt, Nx+1, Nv+1)``).
    """
    g = measure.grid
    c = np.broadcast_to(cost, g.shape)
    base = measure.integrate(c)
    margins = []
    for phi in test_functions:
        phi = np.broadcast_to(phi, g.shape)
        f_phi = g.T * float(np.max(phi - c))
        margins.append(measure.integrate(phi) - f_phi - base)
    margins = np.asarray(margins)
    k = int(np.argmax(margins))
    return ConjugateBoundReport(margins, float(margins[k]), k,
                                bool(margins[k] <= tol * (1.0 + abs(base))), base)


def conjugate_test_family(grid: MeasureGrid, cost: np.ndarray, n_random: int = 20,
                          seed: int = 0, scale: float | None = None) -> list[np.ndarray]:
    """The cost itself, zero, and ``n_random`` bounded random functions."""
    rng = np.random.default_rng(seed)
    c = np.broadcast_to(cost, grid.shape)
    amp = scale if scale is not None else float(np.max(np.abs(c))) + 1.0
    fam = [np.array(c), np.zeros(grid.shape)]
    fam += [amp * rng.uniform(-1.0, 1.0, grid.shape) for _ in range(n_random)]
    return fam
