"""Mollification of MFG solutions and uniform-in-viscosity diagnostics.

A solution ``w`` is smoothed by a space-time convolution with bump kernels
of radius ``alpha``; in time only past values enter, so the smoothed
function lives on ``[alpha, T]``. Its HJB residual measures how far the
smoothed function is from being a subsolution, which should shrink
linearly in ``alpha``. The remaining diagnostics track the quantities that
must stay bounded as the viscosity vanishes: the Lipschitz constant of the
price, moments of the density, and weak distances between induced measures.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, ResolutionError, _jsonable
from .hamiltonians import HamiltonianSpec
from .mather_lp import DiscreteMeasure
from .mfg_solver import GridSpec, MFGSolution

__all__ = [
    "bump",
    "MollifierPair",
    "MollifiedField",
    "mollify_solution",
    "subsolution_residual",
    "ResidualProfile",
    "commutation_order_fit",
    "lipschitz_estimate",
    "moment_trace",
    "WeakDistanceReport",
    "weak_test_family",
    "weak_convergence_diagnostic",
]

NORMALIZATION_TOL = 1e-10


def bump(s: np.ndarray) -> np.ndarray:
    """``(1 - s^2)^3`` on ``[-1, 1]``, zero outside (not normalized)."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 3, 0.0)


def _sampled_kernel(alpha: float, h: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Offsets ``k h`` and weights of ``bump(s / alpha) / alpha``, unit discrete mass."""
    K = int(math.floor(alpha / h))
    s = h * np.arange(-K, K + 1)
    raw = bump(s / alpha) / alpha
    norm = float(raw.sum() * h)
    return s, raw / norm, norm


@dataclass
class MollifierPair:
    """Time kernel ``rho^alpha`` and space kernel ``theta^alpha`` sampled on a grid.

    Both are the bump rescaled to ``[-alpha, alpha]`` and normalized so the
    discrete sums ``sum rho dt`` and ``sum theta dx`` equal one; the raw
    sums before normalization are kept in ``rho_norm`` and ``theta_norm``.
    Convolution in time uses ``rho`` folded onto ``s >= 0`` (the weight at
    ``s`` and ``-s`` both go to ``s``), which keeps unit mass.

    Raises
    ------
    ResolutionError
        If ``alpha < 2 dt`` or ``alpha < 2 dx``.
    """

    alpha: float
    dt: float
    dx: float
    s: np.ndarray = field(init=False, repr=False)
    rho: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)
    theta: np.ndarray = field(init=False, repr=False)
    rho_norm: float = field(init=False)
    theta_norm: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.dt > 0 and self.dx > 0):
            raise ConfigError("alpha, dt and dx must be positive", alpha=self.alpha)
        if self.alpha < 2.0 * self.dt * (1 - 1e-12) or self.alpha < 2.0 * self.dx * (1 - 1e-12):
            raise ResolutionError("mollifier radius below two grid cells; refine the grid",
                                  alpha=self.alpha, dt=self.dt, dx=self.dx)
        self.s, self.rho, self.rho_norm = _sampled_kernel(self.alpha, self.dt)
        self.y, self.theta, self.theta_norm = _sampled_kernel(self.alpha, self.dx)
        self._check()

    def _check(self) -> None:
        for name, w, h, off in (("rho", self.rho, self.dt, self.s), ("theta", self.theta, self.dx, self.y)):
            mass = float(w.sum() * h)
            if abs(mass - 1.0) > NORMALIZATION_TOL:
                raise ResolutionError(f"{name} is not normalized", mass=mass)
            if not np.allclose(w, w[::-1], rtol=0, atol=1e-14 * w.max()):
                raise ResolutionError(f"{name} is not symmetric")
            if float(np.sum(np.abs(off) * w) * h) > self.alpha:
                raise ResolutionError(f"{name} first moment exceeds alpha")

    @property
    def time_weights(self) -> np.ndarray:
        """Folded one-sided weights ``w_k`` at ``s = k dt``, ``k = 0..K``, times ``dt``."""
        K = (self.rho.size - 1) // 2
        w = self.rho[K:].copy()
        w[1:] *= 2.0
        return w * self.dt

    def time_moment(self, order: int) -> float:
        """``sum_k w_k (k dt)^order`` of the folded time kernel."""
        w = self.time_weights
        return float(np.sum(w * (self.dt * np.arange(w.size)) ** order))


@dataclass
class MollifiedField:
    """Values of ``u^alpha`` at time nodes ``t[i0:]`` and all space nodes."""

    values: np.ndarray
    t: np.ndarray
    x: np.ndarray
    i0: int
    alpha: float


def _extend(u: np.ndarray, pad: int, mode: str) -> np.ndarray:
    """Pad rows of ``u`` by ``pad`` nodes beyond each wall."""
    if pad == 0:
        return u
    if mode == "constant":
        return np.pad(u, ((0, 0), (pad, pad)), mode="edge")
    if mode == "linear":
        k = np.arange(1, pad + 1)
        sl = (u[:, 1] - u[:, 0])[:, None]
        sr = (u[:, -1] - u[:, -2])[:, None]
        left = u[:, :1] - sl * k[::-1]
        right = u[:, -1:] + sr * k
        return np.concatenate([left, u, right], axis=1)
    raise ConfigError("extension must be 'linear' or 'constant'", extension=mode)


def mollify_solution(u: np.ndarray, pair: MollifierPair, grid: GridSpec, *,
                     extension: str = "linear") -> MollifiedField:
    """Space-time convolution ``u^alpha(t, x) = sum_s sum_y w(s) theta(y) u(t - s, x - y)``.

    Only past times enter, so the output is restricted to ``t >= alpha``.
    Beyond the walls ``u`` is extended linearly with the wall slope
    (``extension="linear"``, matching the frozen-slope boundary of the HJB
    scheme) or by its wall value (``"constant"``, which keeps
    ``min u <= u^alpha <= max u``).

    Raises
    ------
    ConfigError
        If the array does not match the grid or the kernel was sampled on
        another grid.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.Nt + 1, grid.Nx + 1):
        raise ConfigError("u does not match the grid", shape=u.shape,
                          expected=(grid.Nt + 1, grid.Nx + 1))
    if not (np.isclose(pair.dt, grid.dt) and np.isclose(pair.dx, grid.dx)):
        raise ConfigError("mollifier sampled on a different grid")
    w = pair.time_weights
    K = w.size - 1
    i0 = max(K, int(math.ceil(pair.alpha / grid.dt - 1e-9)))
    if i0 > grid.Nt:
        raise ResolutionError("alpha exceeds the time horizon", alpha=pair.alpha, T=grid.T)
    J = (pair.theta.size - 1) // 2
    ue = _extend(u, J, extension)
    # space: centered discrete convolution on the padded rows
    th = pair.theta * pair.dx
    us = np.stack([np.convolve(row, th, mode="valid") for row in ue])
    out = np.zeros((grid.Nt + 1 - i0, grid.Nx + 1))
    for k in range(K + 1):
        out += w[k] * us[i0 - k:grid.Nt + 1 - k]
    return MollifiedField(out, grid.t[i0:], grid.x, i0, pair.alpha)


def subsolution_residual(spec: HamiltonianSpec, field_: MollifiedField, varpi: np.ndarray,
                         grid: GridSpec, *, margin: float = 0.0) -> float:
    """``sup (-u^alpha_t + H(x, varpi + u^alpha_x))^+`` over interior nodes.

    Derivatives are centered differences; ``varpi`` is the price on the full
    time grid. Nodes closer than ``margin`` to a wall are skipped.
    """
    ua = field_.values
    if ua.shape[0] < 3:
        raise ResolutionError("need at least three mollified time levels", levels=ua.shape[0])
    ut = (ua[2:, 1:-1] - ua[:-2, 1:-1]) / (2.0 * grid.dt)
    ux = (ua[1:-1, 2:] - ua[1:-1, :-2]) / (2.0 * grid.dx)
    x = grid.x[1:-1]
    vp = np.asarray(varpi, dtype=float)[field_.i0 + 1:grid.Nt][:, None]
    res = -ut + spec.eval_H(x[None, :], vp + ux)
    keep = np.abs(x) <= grid.R - margin
    return float(max(0.0, np.max(res[:, keep])))


@dataclass
class ResidualProfile:
    """Supremum subsolution residuals against the mollifier radius.

    ``fitted_order`` is the least-squares slope of ``log residual`` against
    ``log alpha`` and ``fitted_constant`` the matching prefactor; both are
    NaN when a residual sits at the noise ``floor``.
    """

    alphas: list[float]
    sup_residuals: list[float]
    fitted_order: float
    fitted_constant: float
    at_floor: bool = False
    floor: float = 0.0

    def __post_init__(self) -> None:
        if len(self.alphas) != len(self.sup_residuals):
            raise ConfigError("alphas and residuals differ in length")
        a = np.asarray(self.alphas)
        if np.any(a <= 0) or np.any(np.diff(a) >= 0):
            raise ConfigError("alphas must be positive and strictly decreasing", alphas=self.alphas)

    @property
    def ratios(self) -> list[float]:
        """``residual / alpha``, the empirical constant at each radius."""
        return [r / a for a, r in zip(self.alphas, self.sup_residuals)]

    def to_dict(self) -> dict[str, Any]:
        return _jsonable(asdict(self) | {"ratios": self.ratios})

    def to_json(self, **kw: Any) -> str:
        kw.setdefault("indent", 2)
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("alpha", "sup_residual"))
        for a, r in zip(self.alphas, self.sup_residuals):
            w.writerow((repr(float(a)), repr(float(r))))
        return buf.getvalue()


def commutation_order_fit(spec: HamiltonianSpec, sol: MFGSolution, alphas: Sequence[float], *,
                          floor: float = 1e-8, extension: str = "linear",
                          margin: float = 0.0) -> ResidualProfile:
    """Mollify ``sol.u`` at each radius and fit the residual decay order.

    Residuals at or below ``floor`` (default: the fixed-point tolerance)
    cannot be told apart from solver error, so the fit is skipped and the
    profile is flagged ``at_floor``.

    Raises
    ------
    ConfigError
        With fewer than three radii or a radius outside ``(2 dt, T/4)``.
    ResolutionError
        If a radius is below two space cells.
    """
    a = sorted({float(x) for x in alphas}, reverse=True)
    if len(a) < 3:
        raise ConfigError("need at least three distinct radii", alphas=list(alphas))
    g = sol.grid
    if a[0] >= g.T / 4 or a[-1] < 2 * g.dt * (1 - 1e-12):
        raise ConfigError("radii must lie in (2 dt, T/4)", alphas=a, dt=g.dt, T=g.T)
    res = []
    for alpha in a:
        fld = mollify_solution(sol.u, MollifierPair(alpha, g.dt, g.dx), g, extension=extension)
        res.append(subsolution_residual(spec, fld, sol.varpi, g, margin=margin))
    r = np.asarray(res)
    if np.any(r <= floor):
        return ResidualProfile(a, res, math.nan, math.nan, True, floor)
    slope, icpt = np.polyfit(np.log(a), np.log(r), 1)
    return ResidualProfile(a, res, float(slope), float(math.exp(icpt)), False, floor)


def lipschitz_estimate(varpi: np.ndarray, dt: float) -> float:
    """``max_i |varpi_{i+1} - varpi_i| / dt``."""
    v = np.asarray(varpi, dtype=float)
    if v.size < 2:
        raise ConfigError("price path needs at least two samples")
    return float(np.max(np.abs(np.diff(v))) / dt)


def moment_trace(m: np.ndarray, grid: GridSpec, gamma: float) -> np.ndarray:
    """``sum_j |x_j|^gamma m(t_i, x_j) dx`` per time node.

    Same node quadrature as the mass normalization ``sum m dx = 1``.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return m @ (grid.dx * np.abs(grid.x) ** gamma)


@dataclass
class WeakDistanceReport:
    """Pairwise ``max_f |int f dmu_a - int f dmu_b|`` over a test family."""

    labels: list[str]
    distances: np.ndarray
    worst_function: np.ndarray

    @property
    def consecutive(self) -> list[float]:
        """Distances between neighbouring entries of the input list."""
        return [float(self.distances[i, i + 1]) for i in range(len(self.labels) - 1)]

    @property
    def max_distance(self) -> float:
        return float(self.distances.max()) if self.distances.size else 0.0

    def to_dict(self) -> dict[str, Any]:
        return _jsonable({"labels": self.labels, "distances": self.distances,
                          "consecutive": self.consecutive})


def weak_test_family(grid, zeta: tuple[float, float], degree: int = 2) -> list[np.ndarray]:
    """Bounded test functions ``t^c x^a v^b / (1 + |x|^z1 + |v|^z2)`` on the measure grid.

    Exponents run over ``a, b <= degree`` and ``c <= 1``; dividing by the
    growth weight makes every member a bounded continuous function in the
    weighted space the measures are compared in.
    """
    z1, z2 = zeta
    t, x, v = np.meshgrid(grid.t_centers, grid.x, grid.v, indexing="ij")
    weight = 1.0 + np.abs(x) ** z1 + np.abs(v) ** z2
    return [t ** c * x ** a * v ** b / weight
            for c in range(2) for a in range(degree + 1) for b in range(degree + 1)]


def weak_convergence_diagnostic(measures: Sequence[DiscreteMeasure],
                                test_functions: Sequence[np.ndarray] | None = None, *,
                                zeta: tuple[float, float] = (1.0, 2.0),
                                labels: Sequence[str] | None = None) -> WeakDistanceReport:
    """Pairwise weak distances between measures on a common grid.

    Raises
    ------
    ConfigError
        With fewer than two measures or mismatched grids.
    """
    if len(measures) < 2:
        raise ConfigError("need at least two measures")
    g = measures[0].grid
    for mu in measures[1:]:
        if mu.grid != g:
            raise ConfigError("measures live on different grids")
    fam = list(test_functions) if test_functions is not None else weak_test_family(g, zeta)
    ints = np.array([[mu.integrate(f) for f in fam] for mu in measures])
    diff = np.abs(ints[:, None, :] - ints[None, :, :])
    return WeakDistanceReport(list(labels) if labels else [str(i) for i in range(len(measures))],
                              diff.max(axis=2), diff.argmax(axis=2))
