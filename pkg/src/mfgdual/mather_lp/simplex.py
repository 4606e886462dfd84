"""Dense two-phase revised simplex with Bland's rule.

An independent reference for small instances of the measure LP; it shares
nothing with the first-order solver beyond the constraint data. The basis
system is re-solved from scratch at every pivot, so round-off does not
accumulate across the long degenerate stretches typical of these LPs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..errors import InfeasibleError, OracleError
from .assembly import ConstraintSystem

__all__ = ["SimplexResult", "dense_simplex", "brute_force_lp_oracle"]

MAX_VARIABLES = 200


@dataclass
class SimplexResult:
    value: float
    x: np.ndarray
    basis: list[int]
    pivots: int
    dropped_rows: list[int]


def _independent_rows(A: np.ndarray, b: np.ndarray, tol: float) -> tuple[list[int], list[int]]:
    """Split rows into a maximal independent set and the redundant rest.

    Raises
    ------
    InfeasibleError
        If a redundant row is inconsistent with the kept ones.
    """
    m = A.shape[0]
    if m == 0:
        return [], []
    _, R, piv = sla.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
    keep = sorted(int(i) for i in piv[:rank])
    drop = sorted(int(i) for i in piv[rank:])
    if drop:
        # drop rows must be combinations of kept rows with matching right-hand sides
        coef, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
        mismatch = np.abs(coef.T @ b[keep] - b[drop])
        if mismatch.max() > 1e-9 * (1.0 + np.abs(b).max()):
            raise InfeasibleError("equality rows are inconsistent",
                                  witness={"identity": "row-consistency",
                                           "row": drop[int(np.argmax(mismatch))],
                                           "mismatch": float(mismatch.max())})
    return keep, drop


def _revised(A: np.ndarray, b: np.ndarray, c: np.ndarray, basis: list[int], allowed: int,
             tol: float, max_pivots: int, pivots: int) -> tuple[list[int], int]:
    """Bland-rule pivots over the first ``allowed`` columns from a feasible basis."""
    while True:
        B = A[:, basis]
        lu = sla.lu_factor(B)
        xB = sla.lu_solve(lu, b)
        y = sla.lu_solve(lu, c[basis], trans=1)
        d = c[:allowed] - A[:, :allowed].T @ y
        d[basis] = 0.0
        entering = np.nonzero(d < -tol * (1.0 + np.abs(c[:allowed])))[0]
        if entering.size == 0:
            return basis, pivots
        j = int(entering[0])
        w = sla.lu_solve(lu, A[:, j])
        rows = np.nonzero(w > 1e-9)[0]
        if rows.size == 0:
            raise OracleError("LP is unbounded below", column=j)
        ratios = np.maximum(xB[rows], 0.0) / w[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = int(min(ties, key=lambda i: basis[i]))
        basis[r] = j
        pivots += 1
        if pivots > max_pivots:
            raise OracleError("simplex cycling guard tripped", pivots=pivots)


def dense_simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray, *, tol: float = 1e-11,
                  max_pivots: int = 20000) -> SimplexResult:
    """Solve ``min c.x s.t. A x = b, x >= 0`` exactly up to round-off.

    Redundant rows are detected by pivoted QR and dropped (after checking
    consistency). Phase one minimizes the sum of artificial variables;
    artificials left basic at level zero are swapped for real columns.

    Raises
    ------
    InfeasibleError
        If the rows are inconsistent or phase one ends with positive
        infeasibility.
    OracleError
        On unboundedness or when the pivot guard trips.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = A.shape[1]
    keep, dropped = _independent_rows(A, b, 1e-10)
    A, b = A[keep], b[keep]
    m = A.shape[0]
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis, pivots = _revised(A1, b, c1, list(range(n, n + m)), n + m, tol, max_pivots, 0)
    xB = np.linalg.solve(A1[:, basis], b)
    infeas = float(c1[basis] @ xB)
    if infeas > 1e-9 * (1.0 + float(b.sum())):
        raise InfeasibleError("phase one ended with positive infeasibility",
                              witness={"identity": "phase-one", "infeasibility": infeas})

    # rows are independent, so every zero-level artificial can be swapped out
    for r in range(m):
        if basis[r] < n:
            continue
        w = np.linalg.solve(A1[:, basis], A[:, [k for k in range(n) if k not in basis]])
        cand = [k for k in range(n) if k not in basis]
        jj = int(np.argmax(np.abs(w[r])))
        if abs(w[r, jj]) < 1e-12:
            raise OracleError("could not pivot an artificial out of the basis", row=r)
        basis[r] = cand[jj]
        pivots += 1

    basis, pivots = _revised(A, b, c, basis, n, tol, max_pivots, pivots)
    x = np.zeros(n)
    x[basis] = np.linalg.solve(A[:, basis], b)
    return SimplexResult(float(c @ x), x, basis, pivots, dropped)


def brute_force_lp_oracle(cs: ConstraintSystem) -> float:
    """Optimal value of the measure LP by dense simplex (at most 200 variables).

    Raises
    ------
    InfeasibleError
        If the LP has no feasible point.
    OracleError
        If the instance is too large or the pivot guard trips.
    """
    n = cs.A.shape[1]
    if n > MAX_VARIABLES:
        raise OracleError("instance too large for the dense oracle", variables=n,
                          limit=MAX_VARIABLES)
    return dense_simplex(cs.A.toarray(), cs.b, cs.c).value
