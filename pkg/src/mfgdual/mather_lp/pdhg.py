"""Restarted primal-dual hybrid gradient for equality-form LPs.

Solves ``min c.z s.t. A z = b, z >= 0`` with the iteration

    z+ = max(z - tau (c - A^T y), 0)
    y+ = y + sigma (b - A (2 z+ - z))

on a diagonally rescaled problem (Ruiz equilibration followed by
Pock-Chambolle scaling), with restarts to the running average or the last
iterate driven by a KKT error, and an adaptive primal weight balancing
``tau`` against ``sigma``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, InfeasibleError, NonConvergenceError
from .assembly import ConstraintSystem, DiscreteMeasure

__all__ = ["LPSolution", "DualCertificate", "PrimalResult", "pdhg_lp", "solve_primal"]


@dataclass
class LPSolution:
    """Raw PDHG output in the original (unscaled) variables."""

    z: np.ndarray
    y: np.ndarray
    value: float
    dual_value: float
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    converged: bool
    history: list[dict[str, float]] = field(default_factory=list)
    restarts: int = 0
    seconds: float = 0.0


@dataclass
class DualCertificate:
    """Multipliers of the measure LP.

    ``phi`` has one entry per holonomy test hat ``(t_a, x_b)``, ``eta`` one
    per balance row and ``slice`` one per slice-mass row; ``terminal`` is
    the multiplier of the unit-mass row in free mode.
    ``min_reduced_cost`` is ``min(c - A^T y)``; dual feasibility asks for
    it to be nonnegative.
    """

    y: np.ndarray
    phi: np.ndarray
    eta: np.ndarray
    slice: np.ndarray
    terminal: float | None
    min_reduced_cost: float
    dual_value: float


@dataclass
class PrimalResult:
    """Result of :func:`solve_primal`; unpacks as ``(measure, value, certificate)``."""

    measure: DiscreteMeasure
    value: float
    certificate: DualCertificate
    lp: LPSolution

    def __iter__(self) -> Iterator[Any]:
        return iter((self.measure, self.value, self.certificate))


# --------------------------------------------------------------------------
# scaling
# --------------------------------------------------------------------------


def _ruiz(A: sp.csr_matrix, iters: int = 10) -> tuple[np.ndarray, np.ndarray]:
    m, n = A.shape
    dr, dc = np.ones(m), np.ones(n)
    M = abs(A).tocsr()
    for _ in range(iters):
        S = sp.diags(dr) @ M @ sp.diags(dc)
        rmax = np.asarray(S.max(axis=1).todense()).ravel()
        cmax = np.asarray(S.max(axis=0).todense()).ravel()
        rmax[rmax == 0] = 1.0
        cmax[cmax == 0] = 1.0
        dr /= np.sqrt(rmax)
        dc /= np.sqrt(cmax)
    # Pock-Chambolle scaling with alpha = 1
    S = sp.diags(dr) @ M @ sp.diags(dc)
    rs = np.asarray(S.sum(axis=1)).ravel()
    cs = np.asarray(S.sum(axis=0)).ravel()
    rs[rs == 0] = 1.0
    cs[cs == 0] = 1.0
    return dr / np.sqrt(rs), dc / np.sqrt(cs)


def _op_norm(A: sp.csr_matrix, AT: sp.csr_matrix, iters: int = 60, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = AT @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0:
            return 0.0
        v = w / lam
    return math.sqrt(lam)


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------


def _residuals(A, AT, b, c, z, y, bnorm, cnorm):
    r_p = float(np.linalg.norm(A @ z - b))
    rc = c - AT @ y
    r_d = float(np.linalg.norm(np.minimum(rc, 0.0)))
    pv, dv = float(c @ z), float(b @ y)
    return r_p, r_d, pv, dv


def _farkas_check(A: sp.csr_matrix, b: np.ndarray, y: np.ndarray, tol: float) -> float | None:
    """Return ``b.y`` (sign-normalized) if ``y`` certifies infeasibility at tolerance ``tol``.

    For a ray with ``A^T y <= 0`` every ``z >= 0`` satisfies
    ``||A z - b|| >= b.y / ||y||``, so no point can meet the primal
    tolerance once that bound exceeds it.
    """
    ATy = A.T @ y
    by = float(b @ y)
    if by < 0:
        ATy, by, y = -ATy, -by, -y
    amax = float(abs(A).max()) if A.nnz else 1.0
    if float(np.max(ATy, initial=0.0)) > 1e-11 * amax * float(np.max(np.abs(y))):
        return None
    bound = by / float(np.linalg.norm(y))
    if bound > tol * (1.0 + float(np.linalg.norm(b))):
        return by
    return None


def pdhg_lp(A: sp.csr_matrix, b: np.ndarray, c: np.ndarray, *, tol: float = 1e-6,
            max_iter: int = 100000, z0: np.ndarray | None = None, y0: np.ndarray | None = None,
            check_every: int = 64, farkas_rays: list[tuple[str, np.ndarray]] | None = None,
            ray_check_after: int = 10000, time_limit: float | None = None) -> LPSolution:
    """Restarted averaged PDHG.

    Terminates when, in the original variables,
    ``||A z - b|| <= tol (1 + ||b||)``,
    ``||(c - A^T y)^-|| <= tol (1 + ||c||)`` and
    ``|c.z - b.y| <= tol (1 + |c.z| + |b.y|)``.

    Raises
    ------
    InfeasibleError
        When a supplied Farkas ray certifies infeasibility, or when the
        dual iterates diverge along an infeasibility ray.
    NonConvergenceError
        After ``max_iter`` iterations, with the KKT history.
    """
    if tol <= 0 or max_iter < 1:
        raise ConfigError("need tol > 0 and max_iter >= 1", tol=tol, max_iter=max_iter)
    t_start = time.perf_counter()
    A = sp.csr_matrix(A, dtype=float)
    AT_orig = A.T.tocsr()
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    bnorm, cnorm = float(np.linalg.norm(b)), float(np.linalg.norm(c))

    for name, ray in farkas_rays or []:
        by = _farkas_check(A, b, ray, tol)
        if by is not None:
            raise InfeasibleError(f"Farkas ray '{name}' certifies infeasibility",
                                  witness={"identity": name, "b_dot_y": by,
                                           "lower_bound_on_residual": by / float(np.linalg.norm(ray))})

    dr, dc = _ruiz(A)
    As = (sp.diags(dr) @ A @ sp.diags(dc)).tocsr()
    AsT = As.T.tocsr()
    bs, cs_ = dr * b, dc * c
    eta = 0.95 / max(_op_norm(As, AsT), 1e-12)
    nb, nc = float(np.linalg.norm(bs)), float(np.linalg.norm(cs_))
    omega = nc / nb if nb > 1e-10 and nc > 1e-10 else 1.0

    z = np.zeros(n) if z0 is None else np.maximum(np.asarray(z0, dtype=float), 0.0) / dc
    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float) / dr
    ATy = AsT @ y

    def kkt(zz, yy, w):
        rp = As @ zz - bs
        rd = np.minimum(cs_ - AsT @ yy, 0.0)
        gap = float(cs_ @ zz - bs @ yy)
        return math.sqrt(w * float(rp @ rp) + float(rd @ rd) / w + gap * gap)

    z_sum, y_sum, n_avg = np.zeros(n), np.zeros(m), 0
    z_last, y_last = z.copy(), y.copy()
    kkt_last = kkt(z, y, omega)
    kkt_prev_cand = math.inf
    since_restart = 0
    restarts = 0
    history: list[dict[str, float]] = []
    y_ray_ref = None

    for it in range(1, max_iter + 1):
        tau, sigma = eta / omega, eta * omega
        z_new = np.maximum(z - tau * (cs_ - ATy), 0.0)
        y = y + sigma * (bs - As @ (2.0 * z_new - z))
        z = z_new
        ATy = AsT @ y
        z_sum += z
        y_sum += y
        n_avg += 1
        since_restart += 1
        if it % check_every and it != max_iter:
            continue

        z_avg, y_avg = z_sum / n_avg, y_sum / n_avg
        k_cur, k_avg = kkt(z, y, omega), kkt(z_avg, y_avg, omega)
        if k_avg < k_cur:
            zc, yc, kc = z_avg, y_avg, k_avg
        else:
            zc, yc, kc = z, y, k_cur

        zo, yo = dc * zc, dr * yc
        r_p, r_d, pv, dv = _residuals(A, AT_orig, b, c, zo, yo, bnorm, cnorm)
        gap = abs(pv - dv)
        history.append({"iter": it, "primal": r_p, "dual": r_d, "gap": gap, "kkt": kc})
        if (r_p <= tol * (1 + bnorm) and r_d <= tol * (1 + cnorm)
                and gap <= tol * (1 + abs(pv) + abs(dv))):
            return LPSolution(zo, yo, pv, dv, it, r_p, r_d, gap, True, history, restarts,
                              time.perf_counter() - t_start)
        if time_limit is not None and time.perf_counter() - t_start > time_limit:
            break

        # dual iterates running off along a ray signal primal infeasibility
        if it >= ray_check_after:
            y_now = dr * y
            if y_ray_ref is not None:
                d = y_now - y_ray_ref
                if np.linalg.norm(d) > 0 and r_p > tol * (1 + bnorm):
                    by = _farkas_check(A, b, d, tol)
                    if by is not None:
                        raise InfeasibleError("dual iterates diverge along an infeasibility ray",
                                              witness={"identity": "dual-ray", "b_dot_y": by,
                                                       "iterations": it})
            y_ray_ref = y_now

        restart = (kc <= 0.2 * kkt_last
                   or (kc <= 0.8 * kkt_last and kc > kkt_prev_cand)
                   or since_restart >= 0.36 * it)
        kkt_prev_cand = kc
        if restart:
            dz = float(np.linalg.norm(zc - z_last))
            dy = float(np.linalg.norm(yc - y_last))
            if dz > 1e-10 and dy > 1e-10:
                omega = math.exp(0.5 * math.log(dy / dz) + 0.5 * math.log(omega))
            z, y = zc.copy(), yc.copy()
            ATy = AsT @ y
            z_last, y_last = z.copy(), y.copy()
            z_sum[:], y_sum[:], n_avg = 0.0, 0.0, 0
            kkt_last = kkt(z, y, omega)
            kkt_prev_cand = math.inf
            since_restart = 0
            restarts += 1

    raise NonConvergenceError(
        f"PDHG did not reach tol={tol:g} in {it} iterations",
        history=[h["kkt"] for h in history],
        last={k: v for k, v in (history[-1] if history else {}).items()})


def solve_primal(cs: ConstraintSystem, tol: float = 1e-6, max_iter: int = 200000, *,
                 warm_start: DiscreteMeasure | None = None,
                 dual_start: np.ndarray | None = None,
                 time_limit: float | None = None) -> PrimalResult:
    """Minimize the measure cost over the discrete holonomy/balance constraints.

    Parameters
    ----------
    warm_start : DiscreteMeasure, optional
        Initial primal iterate, typically :func:`reference_measure`.
    dual_start : array, optional
        Initial multipliers, one per row, for example lifted from an MFG
        solution. Termination is judged in the original variables, so the
        start only affects speed.

    Returns
    -------
    PrimalResult
        Unpacks as ``(measure, value, certificate)``.

    Raises
    ------
    InfeasibleError
        With a witness naming the violated identity. For the displacement
        identity the witness carries both means and the supply integral.
    NonConvergenceError
        If the tolerance is not reached.
    """
    z0 = cs.to_vector(warm_start) if warm_start is not None else None
    try:
        sol = pdhg_lp(cs.A, cs.b, cs.c, tol=tol, max_iter=max_iter, z0=z0, y0=dual_start,
                      farkas_rays=cs.farkas_rays, time_limit=time_limit)
    except InfeasibleError as exc:
        if exc.witness.get("identity") == "displacement" and cs.nu_fixed is not None:
            g = cs.grid
            mean_nu = float(g.x @ cs.nu_fixed)
            mean_m0 = float(g.x @ cs.m0)
            exc.witness.update({
                "mean_nu": mean_nu, "mean_m0": mean_m0, "sum_Q_dt": cs.meta["sum_Q_dt"],
                "defect": mean_nu - mean_m0 - cs.meta["sum_Q_dt"],
                "statement": "mean(nu) - mean(m0) must equal sum_i Q(t_i) dt",
            })
        raise
    measure = cs.to_measure(sol.z)
    g = cs.grid
    y = sol.y
    nhol = (g.Nt + 1) * (g.Nx + 1)
    rc = cs.c - cs.A.T @ y
    cert = DualCertificate(
        y=y,
        phi=y[:nhol].reshape(g.Nt + 1, g.Nx + 1),
        eta=y[cs.rows_of("balance")],
        slice=y[cs.rows_of("slice-mass")],
        terminal=float(y[-1]) if cs.nu_mode == "free" else None,
        min_reduced_cost=float(rc.min()),
        dual_value=sol.dual_value,
    )
    return PrimalResult(measure, sol.value, cert, sol)

