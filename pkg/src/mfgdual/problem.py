"""Problem data (horizon, supply, terminal cost, initial density) and formula registries.

Problem data are kept as vectorized callables and sampled on whatever grid a
solver uses, so the MFG solver and the measure LP can discretize the same
instance independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError

__all__ = [
    "ProblemData",
    "SUPPLY_FORMULAS",
    "TERMINAL_FORMULAS",
    "DENSITY_FORMULAS",
    "make_supply",
    "make_terminal",
    "make_density",
    "make_problem",
]

ArrayFn = Callable[..., np.ndarray]


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ProblemData:
    """Data of the price-formation problem.

    Attributes
    ----------
    T : float
        Time horizon.
    Q : callable
        Supply ``t -> Q(t)``.
    u_T, u_T_prime : callable
        Terminal cost and its derivative.
    m0_density : callable
        Initial density; it need not be normalized, :meth:`sample_m0`
        normalizes on the sampling grid.
    gamma : float
        Moment order used by the moment diagnostics.
    """

    T: float
    Q: ArrayFn
    u_T: ArrayFn
    u_T_prime: ArrayFn
    m0_density: ArrayFn
    gamma: float = 2.0
    name: str = "custom"
    Q_prime: ArrayFn | None = None
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ConfigError("horizon T must be positive", T=self.T)

    def sample_m0(self, x: np.ndarray, dx: float) -> np.ndarray:
        """Initial density at nodes ``x`` scaled so that ``sum(m0) * dx == 1``."""
        m = np.clip(_arr(self.m0_density(x)), 0.0, None)
        mass = float(m.sum() * dx)
        if not mass > 0:
            raise ConfigError("initial density has no mass on the grid", name=self.name)
        return m / mass

    def sample_Q(self, t) -> np.ndarray:
        return _arr(self.Q(_arr(t))) + 0.0 * _arr(t)

    def integral_Q(self, n: int = 4097) -> float:
        ts = np.linspace(0.0, self.T, n)
        return float(np.trapezoid(self.sample_Q(ts), ts))


# --------------------------------------------------------------------------
# supply curves
# --------------------------------------------------------------------------


def _supply_constant(q: float = 1.0):
    q = float(q)
    return (lambda t: q + 0.0 * _arr(t)), (lambda t: 0.0 * _arr(t))


def _supply_cos(amplitude: float = 1.0, frequency: float = 1.0, offset: float = 0.0):
    a, f, c = float(amplitude), float(frequency), float(offset)
    w = 2.0 * np.pi * f
    return (lambda t: c + a * np.cos(w * _arr(t))), (lambda t: -a * w * np.sin(w * _arr(t)))


def _supply_sin(amplitude: float = 0.5, frequency: float = 1.0, offset: float = 1.0):
    a, f, c = float(amplitude), float(frequency), float(offset)
    w = 2.0 * np.pi * f
    return (lambda t: c + a * np.sin(w * _arr(t))), (lambda t: a * w * np.cos(w * _arr(t)))


def _supply_linear(slope: float = 0.0, intercept: float = 1.0):
    a, b = float(slope), float(intercept)
    return (lambda t: b + a * _arr(t)), (lambda t: a + 0.0 * _arr(t))


SUPPLY_FORMULAS: dict[str, Callable[..., tuple[ArrayFn, ArrayFn]]] = {
    "constant": _supply_constant,
    "cos": _supply_cos,
    "sin": _supply_sin,
    "linear": _supply_linear,
}


# --------------------------------------------------------------------------
# terminal costs
# --------------------------------------------------------------------------


def _terminal_zero():
    return (lambda x: 0.0 * _arr(x)), (lambda x: 0.0 * _arr(x))


def _terminal_linear(slope: float = 1.0, offset: float = 0.0):
    c, d = float(slope), float(offset)
    return (lambda x: c * _arr(x) + d), (lambda x: c + 0.0 * _arr(x))


def _terminal_smooth_abs(strength: float = 1.0, width: float = 0.5, center: float = 0.0):
    a, w, x0 = float(strength), float(width), float(center)

    def u(x):
        return a * np.sqrt(w * w + (_arr(x) - x0) ** 2)

    def up(x):
        y = _arr(x) - x0
        return a * y / np.sqrt(w * w + y * y)

    return u, up


def _terminal_kink(strength: float = 1.0, center: float = 0.0):
    # Lipschitz but not C^1; kept for the non-smooth diagnostics
    a, x0 = float(strength), float(center)
    return (lambda x: a * np.abs(_arr(x) - x0)), (lambda x: a * np.sign(_arr(x) - x0))


TERMINAL_FORMULAS: dict[str, Callable[..., tuple[ArrayFn, ArrayFn]]] = {
    "zero": _terminal_zero,
    "linear": _terminal_linear,
    "smooth_abs": _terminal_smooth_abs,
    "kink": _terminal_kink,
}


# --------------------------------------------------------------------------
# initial densities
# --------------------------------------------------------------------------


def _density_bump(center: float = -0.75, radius: float = 0.5):
    c, r = float(center), float(radius)

    def m(x):
        s = (_arr(x) - c) / r
        return np.where(np.abs(s) < 1.0, (1.0 - s * s) ** 3, 0.0) * (35.0 / (32.0 * r))

    return m


def _density_uniform(left: float = -1.0, right: float = 1.0):
    a, b = float(left), float(right)
    tol = 1e-12 * max(1.0, abs(a), abs(b))

    def m(x):
        # the midpoint value at the jumps keeps node sampling second-order accurate
        x = _arr(x)
        edge = (np.abs(x - a) <= tol) | (np.abs(x - b) <= tol)
        inside = (x > a) & (x < b)
        return np.where(inside, 1.0, np.where(edge, 0.5, 0.0)) / (b - a)

    return m


def _density_hat(center: float = -1.0, radius: float = 0.5):
    c, r = float(center), float(radius)
    return lambda x: np.clip(1.0 - np.abs(_arr(x) - c) / r, 0.0, None) / r


def _density_gaussian(center: float = 0.0, sigma: float = 0.3):
    c, s = float(center), float(sigma)
    return lambda x: np.exp(-0.5 * ((_arr(x) - c) / s) ** 2) / (s * np.sqrt(2 * np.pi))


def _density_cauchy(center: float = 0.0, scale: float = 1.0):
    c, s = float(center), float(scale)
    return lambda x: s / (np.pi * (s * s + (_arr(x) - c) ** 2))


DENSITY_FORMULAS: dict[str, Callable[..., ArrayFn]] = {
    "bump": _density_bump,
    "uniform": _density_uniform,
    "hat": _density_hat,
    "gaussian": _density_gaussian,
    "cauchy": _density_cauchy,
}


def _lookup(registry: dict[str, Callable], kind: str, name: str, params: dict[str, Any]):
    try:
        factory = registry[name]
    except KeyError:
        raise ConfigError(f"unknown {kind} formula {name!r}", known=sorted(registry)) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {kind} formula {name!r}: {exc}") from None


def make_supply(name: str = "constant", **params: Any) -> tuple[ArrayFn, ArrayFn]:
    return _lookup(SUPPLY_FORMULAS, "supply", name, params)


def make_terminal(name: str = "zero", **params: Any) -> tuple[ArrayFn, ArrayFn]:
    return _lookup(TERMINAL_FORMULAS, "terminal", name, params)


def make_density(name: str = "bump", **params: Any) -> ArrayFn:
    return _lookup(DENSITY_FORMULAS, "density", name, params)


def make_problem(T: float = 1.0, supply: dict[str, Any] | None = None,
                 terminal: dict[str, Any] | None = None,
                 density: dict[str, Any] | None = None, gamma: float = 2.0,
                 name: str = "custom") -> ProblemData:
    """Build :class:`ProblemData` from config-style ``{"name": ..., **params}`` dicts."""
    supply = dict(supply or {"name": "constant", "q": 1.0})
    terminal = dict(terminal or {"name": "zero"})
    density = dict(density or {"name": "bump"})
    Q, Qp = make_supply(supply.pop("name", "constant"), **supply)
    u, up = make_terminal(terminal.pop("name", "zero"), **terminal)
    m0 = make_density(density.pop("name", "bump"), **density)
    return ProblemData(T=float(T), Q=Q, u_T=u, u_T_prime=up, m0_density=m0,
                       gamma=float(gamma), name=name, Q_prime=Qp)
