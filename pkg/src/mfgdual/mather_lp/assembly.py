"""Discrete generalized Mather measures and their linear constraints.

A measure lives on time cells ``i = 0..Nt-1`` (centers ``(i + 1/2) dt``),
space nodes ``x_j`` (the MFG grid) and velocity nodes ``v_k``. Weights are
cell-aggregated: ``mu[i, j, k]`` is mass, and each slice carries mass ``dt``.

The holonomy condition is tested against piecewise-linear hats in x at
every time node ``t_a``. Mass at ``(i, j, k)`` leaves node ``x_j`` at time
``t_i`` and lands at ``x_j + v_k dt`` at ``t_{i+1}``, where it is split
linearly between the two neighbouring nodes. Rows scaled by ``dt`` read

    sum_{j,k} mu[a-1, j, k] X_b(x_j + v_k dt) - sum_k mu[a, b, k]
        - dt [a = Nt] nu_b = -dt [a = 0] m0_b dx,

so the measure is a discrete continuity equation from ``m0`` to ``nu``.
Linear splitting preserves first moments, so the hat combination
``phi = x`` together with the balance rows gives the displacement identity
``mean(nu) - mean(m0) = sum_i Q_i dt`` exactly. Cells whose landing point
leaves ``[-R, R]`` are excluded from the LP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError
from ..hamiltonians import HamiltonianSpec, lagrangian
from ..problem import ProblemData

__all__ = [
    "MeasureGrid",
    "DiscreteMeasure",
    "ConstraintSystem",
    "ROW_KINDS",
    "assemble_constraints",
    "constraint_residuals",
    "displacement_defect",
    "measure_cost_vector",
]

ROW_KINDS = ("holonomy", "balance", "slice-mass", "terminal-mass")
_LAND_TOL = 1e-12


@dataclass(frozen=True)
class MeasureGrid:
    """Time-space-velocity grid for discrete measures.

    Parameters
    ----------
    T, R : float
        Horizon and spatial half-width.
    Nt, Nx, Nv : int
        Number of time cells, space intervals (``Nx + 1`` nodes) and velocity
        intervals (``Nv + 1`` nodes on ``[-Vmax, Vmax]``).
    zeta1, zeta2 : float
        Moment exponents; on a bounded grid they only scale diagnostics.
    """

    T: float
    R: float
    Nt: int
    Nx: int
    Nv: int
    Vmax: float
    zeta1: float = 1.0
    zeta2: float = 1.5

    def __post_init__(self) -> None:
        if min(self.Nt, self.Nx, self.Nv) < 1 or not (self.T > 0 and self.R > 0 and self.Vmax > 0):
            raise ConfigError("measure grid needs positive sizes",
                              Nt=self.Nt, Nx=self.Nx, Nv=self.Nv)
        if not (self.zeta1 > 0 and self.zeta2 > 1):
            raise ConfigError("need zeta1 > 0 and zeta2 > 1", zeta1=self.zeta1, zeta2=self.zeta2)

    @classmethod
    def for_spec(cls, spec: HamiltonianSpec, T: float, R: float, Nt: int, Nx: int, Nv: int,
                 Vmax: float) -> MeasureGrid:
        """Grid with ``zeta1 = gamma1`` and ``zeta2`` midway in ``(1, gamma2')``."""
        return cls(T, R, Nt, Nx, Nv, Vmax, zeta1=spec.gamma1,
                   zeta2=0.5 * (1.0 + spec.gamma2_conj))

    def check_zeta(self, spec: HamiltonianSpec) -> None:
        if not (0 < self.zeta1 <= spec.gamma1 and 1 < self.zeta2 < spec.gamma2_conj):
            raise ConfigError("zeta outside the admissible range",
                              zeta1=self.zeta1, zeta2=self.zeta2,
                              gamma1=spec.gamma1, gamma2_conj=spec.gamma2_conj)

    @property
    def dt(self) -> float:
        return self.T / self.Nt

    @property
    def dx(self) -> float:
        return 2.0 * self.R / self.Nx

    @property
    def dv(self) -> float:
        return 2.0 * self.Vmax / self.Nv

    @property
    def t_centers(self) -> np.ndarray:
        return (np.arange(self.Nt) + 0.5) * self.dt

    @property
    def t_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.Nt + 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.Nx + 1)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-self.Vmax, self.Vmax, self.Nv + 1)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nt, self.Nx + 1, self.Nv + 1)

    def landing_mask(self) -> np.ndarray:
        """``(Nx+1, Nv+1)`` mask of cells whose landing point stays in the domain."""
        y = self.x[:, None] + self.v[None, :] * self.dt
        return (y >= -self.R - _LAND_TOL) & (y <= self.R + _LAND_TOL)

    def describe(self) -> dict[str, float]:
        return {"T": self.T, "R": self.R, "Nt": self.Nt, "Nx": self.Nx, "Nv": self.Nv,
                "Vmax": self.Vmax, "dt": self.dt, "dx": self.dx, "dv": self.dv,
                "zeta1": self.zeta1, "zeta2": self.zeta2}


@dataclass
class DiscreteMeasure:
    """Nonnegative weights ``mu`` of shape ``(Nt, Nx+1, Nv+1)`` and terminal ``nu``."""

    grid: MeasureGrid
    mu: np.ndarray
    nu: np.ndarray
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mu.shape != self.grid.shape or self.nu.shape != (self.grid.Nx + 1,):
            raise ConfigError("measure arrays do not match the grid",
                              mu=self.mu.shape, nu=self.nu.shape)

    def slice_masses(self) -> np.ndarray:
        return self.mu.sum(axis=(1, 2))

    def mean_velocity(self) -> np.ndarray:
        return np.einsum("ijk,k->i", self.mu, self.grid.v) / np.maximum(self.slice_masses(), 1e-300)

    def integrate(self, f: np.ndarray) -> float:
        """``sum f * mu`` for ``f`` broadcastable to the grid shape."""
        return float(np.sum(np.broadcast_to(f, self.grid.shape) * self.mu))

    def to_records(self, threshold: float = 0.0) -> np.ndarray:
        """Rows ``(t, x, v, weight)`` of cells with weight above ``threshold``."""
        g = self.grid
        idx = np.nonzero(self.mu > threshold)
        return np.column_stack([g.t_centers[idx[0]], g.x[idx[1]], g.v[idx[2]], self.mu[idx]])


@dataclass
class ConstraintSystem:
    """Sparse LP ``min c.z  s.t.  A z = b, z >= 0``.

    Columns are the active measure cells (``columns`` maps them to flat
    indices of the ``(Nt, Nx+1, Nv+1)`` grid) followed, in free mode, by the
    ``Nx + 1`` terminal weights. ``farkas_rays`` holds candidate
    infeasibility certificates ``y`` with ``A^T y = 0``.
    """

    A: sp.csr_matrix
    b: np.ndarray
    c: np.ndarray
    row_kind: np.ndarray
    grid: MeasureGrid
    columns: np.ndarray
    nu_mode: str
    nu_fixed: np.ndarray | None
    m0: np.ndarray
    Q: np.ndarray
    farkas_rays: list[tuple[str, np.ndarray]] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def n_mu(self) -> int:
        return int(self.columns.size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def rows_of(self, kind: str) -> np.ndarray:
        return np.nonzero(self.row_kind == ROW_KINDS.index(kind))[0]

    def to_vector(self, measure: DiscreteMeasure) -> np.ndarray:
        z = measure.mu.ravel()[self.columns]
        if self.nu_mode == "free":
            z = np.concatenate([z, measure.nu])
        return z

    def to_measure(self, z: np.ndarray) -> DiscreteMeasure:
        g = self.grid
        mu = np.zeros(g.shape)
        mu.ravel()[self.columns] = z[: self.n_mu]
        if self.nu_mode == "free":
            nu = np.asarray(z[self.n_mu:], dtype=float).copy()
        else:
            nu = np.asarray(self.nu_fixed, dtype=float).copy()
        return DiscreteMeasure(g, mu, nu)

    def export_triplets(self) -> str:
        """Text export: header, ``row col value`` lines, then b and c."""
        coo = self.A.tocoo()
        lines = [f"# rows {self.A.shape[0]} cols {self.A.shape[1]} nnz {coo.nnz}",
                 "# section A: row col value"]
        lines += [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        lines.append("# section b: row value kind")
        lines += [f"{i} {v:.17g} {ROW_KINDS[k]}" for i, (v, k) in enumerate(zip(self.b, self.row_kind))]
        lines.append("# section c: col value")
        lines += [f"{j} {v:.17g}" for j, v in enumerate(self.c)]
        return "\n".join(lines) + "\n"


def measure_cost_vector(grid: MeasureGrid, spec: HamiltonianSpec, data: ProblemData,
                        *, use_closed_form: bool = True) -> np.ndarray:
    """Cell costs ``L(x_j, v_k) + v_k u_T'(x_j)``, shape ``(Nx+1, Nv+1)``."""
    L = lagrangian(spec, use_closed_form=use_closed_form)
    X, Vv = np.meshgrid(grid.x, grid.v, indexing="ij")
    cost = np.asarray(L.eval_L(X, Vv), dtype=float) + Vv * np.asarray(data.u_T_prime(X), dtype=float)
    if not np.all(np.isfinite(cost)):
        raise ConfigError("non-finite Lagrangian cost on the measure grid")
    return cost


def _deposit(y: np.ndarray, grid: MeasureGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Left node index and weights of the linear split of points ``y``."""
    s = (y + grid.R) / grid.dx
    s = np.clip(s, 0.0, grid.Nx)
    jl = np.minimum(np.floor(s).astype(np.int64), grid.Nx - 1)
    frac = s - jl
    return jl, 1.0 - frac, frac


def assemble_constraints(grid: MeasureGrid, data: ProblemData, spec: HamiltonianSpec,
                         nu_mode: str = "free", nu_T: np.ndarray | None = None,
                         *, use_closed_form: bool = True) -> ConstraintSystem:
    """Assemble holonomy, balance, slice-mass and (free mode) terminal-mass rows.

    Parameters
    ----------
    nu_mode : {"free", "fixed"}
        In free mode the terminal weights are unknowns with unit total mass;
        in fixed mode ``nu_T`` (weights on the x-grid summing to one) enters
        the right-hand side.

    Row counts: ``(Nt+1)(Nx+1)`` holonomy, ``Nt`` balance, ``Nt`` slice-mass
    and one terminal-mass row in free mode.

    Raises
    ------
    ConfigError
        On an unknown mode or a fixed terminal measure without unit mass.
    """
    if nu_mode not in ("free", "fixed"):
        raise ConfigError("nu_mode must be 'free' or 'fixed'", nu_mode=nu_mode)
    nu_arr = None
    if nu_mode == "fixed":
        if nu_T is None:
            raise ConfigError("fixed mode needs nu_T")
        nu_arr = np.asarray(nu_T, dtype=float)
        if nu_arr.shape != (grid.Nx + 1,) or np.any(nu_arr < 0):
            raise ConfigError("nu_T must be nonnegative weights on the x-grid")
        if abs(nu_arr.sum() - 1.0) > 1e-9:
            raise ConfigError("nu_T must have unit mass", mass=float(nu_arr.sum()))

    Nt, nx, nv = grid.Nt, grid.Nx + 1, grid.Nv + 1
    dt, x, v = grid.dt, grid.x, grid.v
    m0w = data.sample_m0(x, grid.dx) * grid.dx          # node weights summing to 1
    Q = data.sample_Q(grid.t_centers)
    cost = measure_cost_vector(grid, spec, data, use_closed_form=use_closed_form)

    mask2 = grid.landing_mask()
    jj, kk = np.nonzero(mask2)                        # active (j, k) pairs per slice
    n_pair = jj.size
    jl, wl, wr = _deposit(x[jj] + v[kk] * dt, grid)
    ii = np.repeat(np.arange(Nt), n_pair)
    jt, kt = np.tile(jj, Nt), np.tile(kk, Nt)
    columns = (ii * nx + jt) * nv + kt
    n_mu = columns.size
    col = np.arange(n_mu)
    jlt, wlt, wrt = np.tile(jl, Nt), np.tile(wl, Nt), np.tile(wr, Nt)

    n_hol = (Nt + 1) * nx
    row_bal0 = n_hol
    row_mass0 = n_hol + Nt
    n_rows = n_hol + 2 * Nt + (1 if nu_mode == "free" else 0)

    rows, cols, vals = [], [], []

    def add(r, cc, v):
        rows.append(r)
        cols.append(cc)
        vals.append(v)

    # outflow from node (i, j)
    add(ii * nx + jt, col, -np.ones(n_mu))
    # linear deposition at time node i + 1
    add((ii + 1) * nx + jlt, col, wlt)
    keep = wrt > 0
    add((ii[keep] + 1) * nx + jlt[keep] + 1, col[keep], wrt[keep])
    # balance and slice mass
    add(row_bal0 + ii, col, v[kt] - Q[ii])
    add(row_mass0 + ii, col, np.ones(n_mu))

    b = np.zeros(n_rows)
    b[:nx] = -dt * m0w
    b[row_mass0:row_mass0 + Nt] = dt
    c = cost[jt, kt]
    n_cols = n_mu
    if nu_mode == "free":
        nu_cols = n_mu + np.arange(nx)
        add(Nt * nx + np.arange(nx), nu_cols, -dt * np.ones(nx))
        add(np.full(nx, n_rows - 1), nu_cols, np.ones(nx))
        b[-1] = 1.0
        c = np.concatenate([c, np.zeros(nx)])
        n_cols += nx
    else:
        b[Nt * nx:(Nt + 1) * nx] = dt * nu_arr

    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n_rows, n_cols))
    A.sum_duplicates()
    A.eliminate_zeros()

    row_kind = np.zeros(n_rows, dtype=np.int64)
    row_kind[row_bal0:row_mass0] = 1
    row_kind[row_mass0:row_mass0 + Nt] = 2
    if nu_mode == "free":
        row_kind[-1] = 3

    cs = ConstraintSystem(A, b, c, row_kind, grid, columns, nu_mode, nu_arr, m0w, Q)
    cs.farkas_rays.append(("displacement", _displacement_ray(cs)))
    cs.meta["sum_Q_dt"] = float(Q.sum() * dt)
    return cs


def _displacement_ray(cs: ConstraintSystem) -> np.ndarray:
    """Multipliers combining the hat ``phi = x`` with the balance rows.

    ``A^T y`` vanishes on every measure column; in free mode the terminal
    columns pick up ``-dt x_b`` and the terminal-mass row absorbs it only up
    to a constant, so the ray certifies infeasibility in fixed mode only.
    """
    g = cs.grid
    y = np.zeros(cs.A.shape[0])
    y[: (g.Nt + 1) * (g.Nx + 1)] = np.tile(g.x, g.Nt + 1)
    y[cs.rows_of("balance")] = -g.dt
    y[cs.rows_of("slice-mass")] = -g.dt * cs.Q
    return y


def constraint_residuals(cs: ConstraintSystem, measure: DiscreteMeasure) -> dict[str, float]:
    """Max absolute residual per row kind, plus negativity and dropped mass.

    ``dropped_mass`` is the weight the measure puts on cells excluded from
    the LP (landing outside the domain).
    """
    z = cs.to_vector(measure)
    r = cs.A @ z - cs.b
    out = {kind: float(np.max(np.abs(r[cs.rows_of(kind)]), initial=0.0)) for kind in ROW_KINDS}
    if cs.nu_mode == "fixed":
        out["terminal-mass"] = abs(float(measure.nu.sum()) - 1.0)
    out["negativity"] = float(max(0.0, -min(measure.mu.min(), measure.nu.min())))
    total = float(measure.mu.sum())
    out["dropped_mass"] = total - float(z[: cs.n_mu].sum())
    # holonomy rows were scaled by dt; report them per unit time as well
    out["holonomy_per_dt"] = out["holonomy"] / cs.grid.dt
    return out


def displacement_defect(grid: MeasureGrid, data: ProblemData, nu: np.ndarray) -> float:
    """``mean(nu) - mean(m0) - sum_i Q(t_i) dt`` on the measure grid."""
    x = grid.x
    m0w = data.sample_m0(x, grid.dx) * grid.dx
    sumQ = float(data.sample_Q(grid.t_centers).sum() * grid.dt)
    return float(np.dot(x, nu) - np.dot(x, m0w) - sumQ)
