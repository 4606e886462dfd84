"""Finite-difference solver for the price-formation MFG system.

For viscosity ``eps >= 0`` the unknowns ``(u, m, varpi)`` solve

    -u_t + H(x, varpi + u_x) = eps u_xx,      u(T) = u_T,
     m_t - (H_p(x, varpi + u_x) m)_x = eps m_xx,  m(0) = m0,
    -int H_p(x, varpi + u_x) m dx = Q(t),

on ``[0, T] x [-R, R]``. The HJB step is an explicit Engquist-Osher
(monotone) scheme with implicit diffusion; the Fokker-Planck step is the
exact adjoint of the linearized HJB step, so it conserves mass and
preserves positivity under the same CFL condition. The price is found by a
damped fixed point on the market-clearing residual.

Spatial boundary: the HJB gradient outside the domain is frozen at the
wall slope of the terminal data (a linear extension of u), which keeps
linear solutions exact and the scheme monotone. The density sees no-flux
walls.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

from .errors import (ConfigError, DegeneracyError, NonConvergenceError, NumericalFailure,
                     RootFindError, SchemeError)
from .hamiltonians import HamiltonianSpec
from .problem import ProblemData

__all__ = [
    "GridSpec",
    "MFGSolution",
    "SweepResult",
    "numerical_hamiltonian",
    "upwind_speeds",
    "effective_speed",
    "solve_hjb_backward",
    "solve_fp_forward",
    "balance_residual",
    "initial_price_root",
    "clearing_price",
    "price_update",
    "initial_price_guess",
    "fixed_point_solve",
    "vanishing_viscosity_sweep",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform node grid on ``[0, T] x [-R, R]``.

    Time nodes ``t_i = i dt`` for ``i = 0..Nt`` and space nodes
    ``x_j = -R + j dx`` for ``j = 0..Nx``.
    """

    T: float
    R: float
    Nt: int
    Nx: int

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.R > 0):
            raise ConfigError("grid needs T > 0 and R > 0", T=self.T, R=self.R)
        if self.Nt < 2 or self.Nx < 2:
            raise ConfigError("grid needs Nt, Nx >= 2", Nt=self.Nt, Nx=self.Nx)

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def dx(self) -> float:
        return 2.0 * self.R / self.Nx

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.Nx + 1)

    def cfl_ratio(self, speed: float) -> float:
        return self.dt * speed / self.dx


@dataclass
class MFGSolution:
    """Discrete triplet ``(u, m, varpi)`` at viscosity ``epsilon``.

    ``u`` and ``m`` have shape ``(Nt+1, Nx+1)`` with rows indexed by time;
    ``sum(m[i]) * dx == 1`` for every ``i``.
    """

    u: np.ndarray
    m: np.ndarray
    varpi: np.ndarray
    epsilon: float
    balance_residual: np.ndarray
    iterations: int
    grid: GridSpec
    boundary_slopes: tuple[float, float] = (0.0, 0.0)
    residual_history: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.balance_residual)))


@dataclass
class SweepResult:
    """Solutions along a decreasing viscosity schedule.

    ``extrapolated`` carries the Richardson-extrapolated ``u`` and ``varpi``
    (linear in eps, from the last two levels) with ``epsilon = 0``; its
    density is the one at the smallest eps.
    """

    solutions: list[MFGSolution]
    extrapolated: MFGSolution
    schedule: list[float]

    @property
    def price_increments(self) -> list[float]:
        """Sup-norm distance between consecutive price paths."""
        return [float(np.max(np.abs(a.varpi - b.varpi)))
                for a, b in zip(self.solutions, self.solutions[1:])]


# --------------------------------------------------------------------------
# spatial building blocks
# --------------------------------------------------------------------------


def _wall_slopes(u_row: np.ndarray, dx: float) -> tuple[float, float]:
    return float((u_row[1] - u_row[0]) / dx), float((u_row[-1] - u_row[-2]) / dx)


def _one_sided_gradients(u_row: np.ndarray, dx: float,
                         slopes: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    d = np.diff(u_row) / dx
    dminus = np.concatenate(([slopes[0]], d))
    dplus = np.concatenate((d, [slopes[1]]))
    return dminus, dplus


def numerical_hamiltonian(spec: HamiltonianSpec, x, a, b) -> np.ndarray:
    """Engquist-Osher flux ``H(max(a,p*)) + H(min(b,p*)) - H(p*)``.

    Nondecreasing in ``a`` and nonincreasing in ``b``, and equal to
    ``H(x, a)`` when ``a == b``.
    """
    ps = spec.p_star
    return (spec.eval_H(x, np.maximum(a, ps)) + spec.eval_H(x, np.minimum(b, ps))
            - spec.eval_H(x, ps))


def upwind_speeds(spec: HamiltonianSpec, x: np.ndarray, varpi_i: float, u_row: np.ndarray,
                  dx: float, slopes: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of the EO flux, with the wall outflow removed.

    Returns ``alpha = H_p(max(a,p*)) >= 0`` and ``beta = H_p(min(b,p*)) <= 0``
    where ``a, b`` are the backward and forward momenta. ``alpha[0]`` and
    ``beta[-1]`` are zero: the wall gradients are frozen, so the linearized
    scheme does not depend on them, and the adjoint density sees no-flux
    walls.
    """
    dminus, dplus = _one_sided_gradients(u_row, dx, slopes)
    ps = spec.p_star
    alpha = spec.eval_Hp(x, np.maximum(varpi_i + dminus, ps))
    beta = spec.eval_Hp(x, np.minimum(varpi_i + dplus, ps))
    alpha = np.maximum(alpha, 0.0)
    beta = np.minimum(beta, 0.0)
    alpha[0] = 0.0
    beta[-1] = 0.0
    return alpha, beta


def effective_speed(spec: HamiltonianSpec, x: np.ndarray, varpi_i: float, u_row: np.ndarray,
                    dx: float, slopes: tuple[float, float]) -> np.ndarray:
    """Upwind value of ``H_p(x, varpi + u_x)`` used for demand and transport."""
    alpha, beta = upwind_speeds(spec, x, varpi_i, u_row, dx, slopes)
    return alpha + beta


def _neumann_banded(n: int, dx: float, coef: float) -> np.ndarray:
    """Banded form of ``I - coef * A`` with A the symmetric no-flux Laplacian."""
    r = coef / (dx * dx)
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = ab[1, -1] = 1.0 + r
    return ab


def _check_cfl(alpha: np.ndarray, beta: np.ndarray, grid: GridSpec, step: int) -> None:
    ratio = grid.dt / grid.dx * float(np.max(alpha - beta))
    if ratio > 1.0 + 1e-12:
        raise ConfigError("CFL condition violated: dt * max|H_p| > dx", step=step,
                          ratio=ratio, dt=grid.dt, dx=grid.dx)


def _check_finite(arr: np.ndarray, what: str, step: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailure(f"non-finite values in {what}", step=step)


# --------------------------------------------------------------------------
# HJB and Fokker-Planck
# --------------------------------------------------------------------------


def solve_hjb_backward(spec: HamiltonianSpec, varpi: np.ndarray, epsilon: float,
                       grid: GridSpec, u_T: np.ndarray,
                       boundary_slopes: tuple[float, float] | None = None) -> np.ndarray:
    """March the HJB equation backward from ``u[Nt] = u_T``.

    Each step solves ``(I - dt eps A) u^i = u^{i+1} - dt Hhat(u^{i+1}) + dt eps g``
    where Hhat is the Engquist-Osher flux evaluated with ``varpi[i+1]`` and
    ``g`` carries the frozen wall slopes.

    Parameters
    ----------
    boundary_slopes : (float, float), optional
        Gradients outside the left/right walls. Defaults to the wall slopes
        of ``u_T``.

    Raises
    ------
    ConfigError
        On a CFL violation.
    NumericalFailure
        On NaN or overflow, with the step index.
    """
    if epsilon < 0:
        raise ConfigError("viscosity must be nonnegative", epsilon=epsilon)
    varpi = np.asarray(varpi, dtype=float)
    u_T = np.asarray(u_T, dtype=float)
    if varpi.shape != (grid.Nt + 1,) or u_T.shape != (grid.Nx + 1,):
        raise ConfigError("price path or terminal data has the wrong shape")
    dt, dx, x = grid.dt, grid.dx, grid.x
    slopes = boundary_slopes if boundary_slopes is not None else _wall_slopes(u_T, dx)
    u = np.empty((grid.Nt + 1, grid.Nx + 1))
    u[-1] = u_T
    ab = _neumann_banded(grid.Nx + 1, dx, dt * epsilon) if epsilon > 0 else None
    g = np.zeros(grid.Nx + 1)
    g[0], g[-1] = -slopes[0] / dx, slopes[1] / dx
    for i in range(grid.Nt - 1, -1, -1):
        w = varpi[i + 1]
        dminus, dplus = _one_sided_gradients(u[i + 1], dx, slopes)
        alpha, beta = upwind_speeds(spec, x, w, u[i + 1], dx, slopes)
        _check_cfl(alpha, beta, grid, i)
        rhs = u[i + 1] - dt * numerical_hamiltonian(spec, x, w + dminus, w + dplus)
        if ab is not None:
            rhs = solve_banded((1, 1), ab, rhs + dt * epsilon * g)
        _check_finite(rhs, "HJB step", i)
        u[i] = rhs
    return u


def solve_fp_forward(spec: HamiltonianSpec, u: np.ndarray, varpi: np.ndarray, epsilon: float,
                     grid: GridSpec, m0: np.ndarray,
                     boundary_slopes: tuple[float, float] | None = None) -> np.ndarray:
    """March the Fokker-Planck equation forward from ``m[0] = m0``.

    ``m^{i+1} = (I - dt L_{i+1})^T (I - dt eps A)^{-1} m^i`` where ``L_{i+1}``
    is the linearized EO step used by :func:`solve_hjb_backward` between
    levels i+1 and i. Node k sends a fraction ``dt alpha_k / dx`` of its mass
    left and ``-dt beta_k / dx`` right.

    Raises
    ------
    SchemeError
        If mass drifts or negative mass beyond -1e-12 appears.
    """
    if epsilon < 0:
        raise ConfigError("viscosity must be nonnegative", epsilon=epsilon)
    dt, dx, x = grid.dt, grid.dx, grid.x
    slopes = boundary_slopes if boundary_slopes is not None else _wall_slopes(u[-1], dx)
    m = np.empty_like(u)
    m[0] = np.asarray(m0, dtype=float)
    mass0 = float(m[0].sum() * dx)
    ab = _neumann_banded(grid.Nx + 1, dx, dt * epsilon) if epsilon > 0 else None
    lam = dt / dx
    for i in range(grid.Nt):
        alpha, beta = upwind_speeds(spec, x, varpi[i + 1], u[i + 1], dx, slopes)
        _check_cfl(alpha, beta, grid, i)
        mm = solve_banded((1, 1), ab, m[i]) if ab is not None else m[i]
        left = lam * alpha * mm      # sent from k to k-1
        right = -lam * beta * mm     # sent from k to k+1
        new = mm - left - right
        new[:-1] += left[1:]
        new[1:] += right[:-1]
        _check_finite(new, "Fokker-Planck step", i)
        if new.min() < -1e-12:
            raise SchemeError("negative density in Fokker-Planck step", step=i,
                              min=float(new.min()))
        m[i + 1] = new
        if abs(new.sum() * dx - mass0) > 1e-10:
            raise SchemeError("Fokker-Planck step lost mass", step=i,
                              mass=float(new.sum() * dx))
    return m


def balance_residual(spec: HamiltonianSpec, u: np.ndarray, m: np.ndarray, varpi: np.ndarray,
                     grid: GridSpec, Q: np.ndarray,
                     boundary_slopes: tuple[float, float] | None = None) -> np.ndarray:
    """``residual[i] = -sum_j H_p(x_j, varpi_i + u_x[i, j]) m[i, j] dx - Q(t_i)``.

    ``H_p`` is the upwind effective speed of :func:`effective_speed`, the
    same drift that transports the density.
    """
    dx, x = grid.dx, grid.x
    slopes = boundary_slopes if boundary_slopes is not None else _wall_slopes(u[-1], dx)
    Q = np.asarray(Q, dtype=float)
    out = np.empty(grid.Nt + 1)
    for i in range(grid.Nt + 1):
        s = effective_speed(spec, x, varpi[i], u[i], dx, slopes)
        out[i] = -float(np.dot(s, m[i])) * dx - Q[i]
    return out


# --------------------------------------------------------------------------
# prices
# --------------------------------------------------------------------------


def _bracketed_root(f, guess: float, scale: float = 1.0, max_expand: int = 60) -> float:
    """Root of a nonincreasing scalar function by bracket expansion and Brent."""
    f0 = f(guess)
    if f0 == 0.0:
        return guess
    step = max(scale, 1e-3)
    # f nonincreasing: positive value means the root lies to the right
    direction = 1.0 if f0 > 0 else -1.0
    a, fa = guess, f0
    for _ in range(max_expand):
        b = a + direction * step
        fb = f(b)
        if np.sign(fb) != np.sign(f0):
            lo, hi = (a, b) if a < b else (b, a)
            return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
        a, fa = b, fb
        step *= 2.0
    raise RootFindError("could not bracket the market-clearing price", guess=guess)


def initial_price_root(spec: HamiltonianSpec, u0_gradient, m0: np.ndarray, Q0: float,
                       x: np.ndarray | None = None) -> float:
    """Price clearing the market at t = 0.

    Solves ``-sum H_p(x, varpi + u_x(0, x)) w = Q0`` where ``w`` are the
    weights of ``m0`` normalized to unit sum. ``u0_gradient`` is either one
    gradient array or a ``(backward, forward)`` pair, in which case the
    upwind speed is used. The map ``varpi -> demand`` is decreasing because
    ``H_pp >= kappa > 0``.

    Raises
    ------
    RootFindError
        If no sign change is found or the final residual exceeds 1e-10.
    """
    m0 = np.asarray(m0, dtype=float)
    w = m0 / m0.sum()
    xs = np.zeros_like(m0) if x is None else np.asarray(x, dtype=float)
    if isinstance(u0_gradient, tuple):
        gm, gp = (np.asarray(g, dtype=float) for g in u0_gradient)
        ps = spec.p_star

        def f(v):
            s = (np.maximum(spec.eval_Hp(xs, np.maximum(v + gm, ps)), 0.0)
                 + np.minimum(spec.eval_Hp(xs, np.minimum(v + gp, ps)), 0.0))
            return -float(np.dot(s, w)) - Q0
    else:
        g = np.asarray(u0_gradient, dtype=float) * np.ones_like(m0)

        def f(v):
            return -float(np.dot(spec.eval_Hp(xs, v + g), w)) - Q0

    guess = spec.p_star - float(np.dot(np.broadcast_to(
        u0_gradient[0] if isinstance(u0_gradient, tuple) else u0_gradient, m0.shape), w))
    root = _bracketed_root(f, guess, scale=1.0 + abs(Q0))
    if abs(f(root)) > 1e-10 * (1.0 + abs(Q0)):
        raise RootFindError("initial clearing residual above 1e-10", residual=f(root))
    return float(root)


def clearing_price(spec: HamiltonianSpec, grid: GridSpec, u_row: np.ndarray, m_row: np.ndarray,
                   Q_i: float, slopes: tuple[float, float], guess: float) -> float:
    """Price at one time node that zeroes the discrete balance residual."""
    x, dx = grid.x, grid.dx

    def f(v):
        return -float(np.dot(effective_speed(spec, x, v, u_row, dx, slopes), m_row)) * dx - Q_i

    return _bracketed_root(f, guess, scale=0.1 + abs(Q_i))


def initial_price_guess(spec: HamiltonianSpec, data: ProblemData, grid: GridSpec) -> np.ndarray:
    """Clearing prices computed with the terminal gradient and the initial density.

    Exact for the linear-quadratic family, where the gradient of u never
    changes and the demand does not depend on where the mass sits.
    """
    x, dx = grid.x, grid.dx
    u_T = data.u_T(x) + 0.0 * x
    m0 = data.sample_m0(x, dx)
    slopes = _wall_slopes(u_T, dx)
    Q = data.sample_Q(grid.t)
    out = np.empty(grid.Nt + 1)
    guess = -float(Q[0])
    for i in range(grid.Nt + 1):
        out[i] = clearing_price(spec, grid, u_T, m0, float(Q[i]), slopes, guess)
        guess = out[i]
    return out


def price_update(spec: HamiltonianSpec, sol: MFGSolution, data: ProblemData, *,
                 correct: bool = True) -> np.ndarray:
    """New price path from the price ODE, optionally projected onto clearing.

    Integrates

        varpi' = [-Q' - int H_pp H_x m + eps int H_ppp (u_xx)^2 m] / int H_pp m

    by explicit Euler from the clearing price at t = 0, with centered
    gradients, the second difference for ``u_xx`` and ``Q'`` on
    ``[t_i, t_{i+1}]`` as ``(Q_{i+1} - Q_i) / dt``. At eps = 0 the
    ``H_ppp`` term drops out with its prefactor.

    With ``correct=True`` each Euler value seeds a bracketed root solve of
    the discrete balance residual at that node, which removes the O(dt)
    drift of the ODE so the fixed point can reach tight tolerances.

    Raises
    ------
    DegeneracyError
        If ``int H_pp m`` falls below ``kappa / 2``.
    """
    grid = sol.grid
    x, dx, dt = grid.x, grid.dx, grid.dt
    slopes = sol.boundary_slopes
    Q = data.sample_Q(grid.t)
    eps = sol.epsilon
    u, m, varpi = sol.u, sol.m, sol.varpi
    new = np.empty(grid.Nt + 1)
    new[0] = clearing_price(spec, grid, u[0], m[0], float(Q[0]), slopes, float(varpi[0]))
    for i in range(grid.Nt):
        dminus, dplus = _one_sided_gradients(u[i], dx, slopes)
        p = varpi[i] + 0.5 * (dminus + dplus)
        uxx = (dplus - dminus) / dx
        mass = m[i] * dx
        hpp = spec.eval_Hpp(x, p)
        denom = float(np.dot(hpp, mass))
        if denom < 0.5 * spec.kappa:
            raise DegeneracyError("int H_pp m fell below kappa/2", step=i, value=denom)
        num = (-(Q[i + 1] - Q[i]) / dt
               - float(np.dot(hpp * spec.H_x(x, p), mass)))
        if eps > 0:
            num += eps * float(np.dot(spec.H_ppp(x, p) * uxx * uxx, mass))
        new[i + 1] = new[i] + dt * num / denom
    if correct:
        for i in range(1, grid.Nt + 1):
            new[i] = clearing_price(spec, grid, u[i], m[i], float(Q[i]), slopes, float(new[i]))
    return new


# --------------------------------------------------------------------------
# fixed point and viscosity sweep
# --------------------------------------------------------------------------


def _sample_terminal(data: ProblemData, grid: GridSpec) -> np.ndarray:
    return np.asarray(data.u_T(grid.x), dtype=float) + 0.0 * grid.x


def fixed_point_solve(spec: HamiltonianSpec, data: ProblemData, grid: GridSpec,
                      epsilon: float, damping: float = 0.5, tol: float = 1e-8,
                      max_iter: int = 200, varpi_init: np.ndarray | None = None,
                      min_damping: float = 1e-3) -> MFGSolution:
    """Solve the MFG system by a damped fixed point on the price.

    Each iteration solves the HJB equation for the current price, the
    Fokker-Planck equation for the resulting drift, and evaluates the
    balance residual; if it is not below ``tol`` the price is replaced by
    ``(1 - theta) varpi + theta price_update(...)``. ``theta`` starts at
    ``damping`` and is halved whenever the residual grows.

    Raises
    ------
    NonConvergenceError
        After ``max_iter`` iterations, with the residual history.
    """
    if not 0 < damping <= 1:
        raise ConfigError("damping must lie in (0, 1]", damping=damping)
    if tol <= 0 or max_iter < 1:
        raise ConfigError("need tol > 0 and max_iter >= 1", tol=tol, max_iter=max_iter)
    x, dx = grid.x, grid.dx
    u_T = _sample_terminal(data, grid)
    m0 = data.sample_m0(x, dx)
    Q = data.sample_Q(grid.t)
    slopes = _wall_slopes(u_T, dx)
    if varpi_init is None:
        varpi = initial_price_guess(spec, data, grid)
    else:
        varpi = np.asarray(varpi_init, dtype=float).copy()
    theta = damping
    history: list[float] = []
    for it in range(1, max_iter + 1):
        u = solve_hjb_backward(spec, varpi, epsilon, grid, u_T, slopes)
        m = solve_fp_forward(spec, u, varpi, epsilon, grid, m0, slopes)
        res = balance_residual(spec, u, m, varpi, grid, Q, slopes)
        err = float(np.max(np.abs(res)))
        sol = MFGSolution(u, m, varpi, float(epsilon), res, it, grid, slopes, history)
        if err <= tol:
            history.append(err)
            return sol
        if history and err > history[-1]:
            theta = max(0.5 * theta, min_damping)
        history.append(err)
        target = price_update(spec, sol, data, correct=True)
        varpi = (1.0 - theta) * varpi + theta * target
    raise NonConvergenceError(
        f"price fixed point did not reach tol={tol:g} in {max_iter} iterations",
        history=history, epsilon=epsilon)


def vanishing_viscosity_sweep(spec: HamiltonianSpec, data: ProblemData, grid: GridSpec,
                              eps_schedule: Sequence[float], damping: float = 0.5,
                              tol: float = 1e-8, max_iter: int = 200) -> SweepResult:
    """Solve along a strictly decreasing positive eps schedule with warm starts.

    Raises
    ------
    NonConvergenceError
        From the failing level, with that eps attached.
    """
    sched = [float(e) for e in eps_schedule]
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("eps schedule must be strictly decreasing and positive",
                          schedule=sched)
    sols: list[MFGSolution] = []
    warm = None
    for eps in sched:
        try:
            sol = fixed_point_solve(spec, data, grid, eps, damping, tol, max_iter, warm)
        except NonConvergenceError as exc:
            exc.details["failed_epsilon"] = eps
            raise
        sols.append(sol)
        warm = sol.varpi
    return SweepResult(sols, _richardson(sols, spec, data), sched)


def _richardson(sols: list[MFGSolution], spec: HamiltonianSpec,
                data: ProblemData) -> MFGSolution:
    last = sols[-1]
    if len(sols) < 2:
        u, varpi = last.u.copy(), last.varpi.copy()
    else:
        prev = sols[-2]
        e1, e2 = prev.epsilon, last.epsilon
        # linear model f(eps) = f0 + c eps through the last two levels
        w = e2 / (e1 - e2)
        u = last.u + w * (last.u - prev.u)
        varpi = last.varpi + w * (last.varpi - prev.varpi)
    grid = last.grid
    res = balance_residual(spec, u, last.m, varpi, grid, data.sample_Q(grid.t),
                           last.boundary_slopes)
    return MFGSolution(u, last.m.copy(), varpi, 0.0, res, last.iterations, grid,
                       last.boundary_slopes, [], converged=True)
