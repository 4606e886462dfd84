"""Hamiltonian/Lagrangian pairs, Legendre transforms and assumption checks.

A Hamiltonian is stored as a bundle of vectorized evaluators together with
the constants of the standing convexity and growth hypotheses. The
Lagrangian is its Legendre transform

    L(x, v) = sup_p ( -p v - H(x, p) ),

computed in closed form when one is registered and numerically otherwise.
Every evaluator accepts numpy arrays and broadcasts ``x`` against ``p``
(or ``v``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable

import numpy as np

from .errors import ConfigError, NumericalFailure

if TYPE_CHECKING:
    from .problem import ProblemData

__all__ = [
    "Potential",
    "HamiltonianSpec",
    "LagrangianView",
    "AssumptionCheck",
    "AssumptionReport",
    "SampleBox",
    "POTENTIALS",
    "HAMILTONIAN_FAMILIES",
    "make_potential",
    "make_hamiltonian",
    "quadratic",
    "power_gamma2",
    "legendre_transform",
    "lagrangian",
    "optimal_momentum",
    "legendre_involution_check",
    "dual_pairing_check",
    "validate_assumptions",
]

ArrayFn = Callable[..., np.ndarray]

_HPPP_STEP = 1e-4
_HX_STEP = 1e-5


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """A potential V(x) with its first two derivatives.

    Attributes
    ----------
    lipschitz : float
        Global Lipschitz constant of V.
    lower_bound : float
        Global infimum of V.
    """

    name: str
    V: ArrayFn
    Vprime: ArrayFn
    Vsecond: ArrayFn
    lipschitz: float
    lower_bound: float
    params: dict[str, float] = field(default_factory=dict)


def _zero_potential() -> Potential:
    def zero(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return Potential("zero", zero, zero, zero, lipschitz=0.0, lower_bound=0.0)


def _smooth_abs_potential(strength: float = 0.5, width: float = 1.0) -> Potential:
    """``strength * sqrt(width**2 + x**2)``, a convex Lipschitz smoothing of |x|."""
    if strength < 0 or width <= 0:
        raise ConfigError("smooth_abs needs strength >= 0 and width > 0",
                          strength=strength, width=width)
    a, w = float(strength), float(width)

    def V(x):
        return a * np.sqrt(w * w + np.asarray(x, dtype=float) ** 2)

    def Vp(x):
        x = np.asarray(x, dtype=float)
        return a * x / np.sqrt(w * w + x * x)

    def Vpp(x):
        x = np.asarray(x, dtype=float)
        return a * w * w / (w * w + x * x) ** 1.5

    return Potential("smooth_abs", V, Vp, Vpp, lipschitz=a, lower_bound=a * w,
                     params={"strength": a, "width": w})


POTENTIALS: dict[str, Callable[..., Potential]] = {
    "zero": _zero_potential,
    "smooth_abs": _smooth_abs_potential,
}


def make_potential(name: str = "zero", **params: float) -> Potential:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise ConfigError(f"unknown potential {name!r}", known=sorted(POTENTIALS)) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for potential {name!r}: {exc}") from None


# --------------------------------------------------------------------------
# Hamiltonian specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianSpec:
    """Evaluators and structural constants of a Hamiltonian H(x, p).

    Parameters
    ----------
    eval_H, eval_Hp, eval_Hpp : callable
        ``(x, p) -> array``; H and its first two p-derivatives.
    eval_V, eval_Vprime : callable
        ``x -> array``; the potential and its derivative. For separable
        Hamiltonians ``H(x, p) = H(0, p) - (V(x) - V(0))``.
    kappa : float
        Uniform convexity constant, ``H_pp >= kappa``.
    gamma1, gamma2 : float
        Growth exponents in x and p.
    growth_C, growth_C1, growth_C2 : float
        Constants of the growth sandwich
        ``-C2|x|^g1 + |p|^g2/(C g2) - C <= H <= -C1|x|^g1 + C|p|^g2/g2 + C``
        together with ``|H_x| <= C(|p|^g2 + 1)`` and
        ``|H_p| <= C(|p|^(g2-1) + 1)``.
    separable : bool
        Whether H splits as a function of p minus V(x).
    eval_Hppp, eval_Hx : callable, optional
        Closed forms; otherwise obtained by central differences.
    eval_L, eval_Lv : callable, optional
        Closed-form Lagrangian and its v-derivative.
    p_star : float
        Minimizer of ``p -> H(x, p)`` (independent of x for the built-ins);
        used by the Engquist-Osher numerical Hamiltonian.
    """

    eval_H: ArrayFn
    eval_Hp: ArrayFn
    eval_Hpp: ArrayFn
    eval_V: ArrayFn
    eval_Vprime: ArrayFn
    kappa: float
    gamma1: float
    gamma2: float
    growth_C: float
    growth_C1: float
    growth_C2: float
    separable: bool
    name: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)
    eval_Hppp: ArrayFn | None = None
    eval_Hx: ArrayFn | None = None
    eval_L: ArrayFn | None = None
    eval_Lv: ArrayFn | None = None
    p_star: float = 0.0

    def __post_init__(self) -> None:
        if not self.kappa > 0:
            raise ConfigError("kappa must be positive", kappa=self.kappa)
        if self.gamma1 < 1 or self.gamma2 <= 1:
            raise ConfigError("need gamma1 >= 1 and gamma2 > 1",
                              gamma1=self.gamma1, gamma2=self.gamma2)

    @property
    def gamma2_conj(self) -> float:
        return self.gamma2 / (self.gamma2 - 1.0)

    def H_ppp(self, x, p):
        if self.eval_Hppp is not None:
            return self.eval_Hppp(x, p)
        h = _HPPP_STEP
        p = np.asarray(p, dtype=float)
        return (self.eval_Hpp(x, p + h) - self.eval_Hpp(x, p - h)) / (2 * h)

    def H_x(self, x, p):
        if self.eval_Hx is not None:
            return self.eval_Hx(x, p)
        if self.separable:
            return -np.asarray(self.eval_Vprime(x), dtype=float) + 0.0 * np.asarray(p)
        h = _HX_STEP
        x = np.asarray(x, dtype=float)
        return (self.eval_H(x + h, p) - self.eval_H(x - h, p)) / (2 * h)

    def with_closed_forms(self, enabled: bool) -> HamiltonianSpec:
        """Copy with the closed-form Lagrangian kept or stripped."""
        if enabled:
            return self
        return replace(self, eval_L=None, eval_Lv=None)

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "params": dict(self.params),
            "kappa": self.kappa,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "growth_C": self.growth_C,
            "growth_C1": self.growth_C1,
            "growth_C2": self.growth_C2,
            "separable": self.separable,
            "closed_form_lagrangian": self.eval_L is not None,
        }


def quadratic(potential: Potential | None = None) -> HamiltonianSpec:
    """``H(x, p) = p**2 / 2 - V(x)``, self-dual with ``L = v**2 / 2 + V(x)``."""
    pot = potential or _zero_potential()
    V, Vp = pot.V, pot.Vprime
    V0 = float(V(0.0))
    C = max(1.0, -pot.lower_bound, V0, pot.lipschitz)

    def H(x, p):
        return 0.5 * np.asarray(p, dtype=float) ** 2 - V(x)

    def Hp(x, p):
        return np.asarray(p, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    def Hpp(x, p):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(p)).shape)

    def Hppp(x, p):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(p)).shape)

    def L(x, v):
        return 0.5 * np.asarray(v, dtype=float) ** 2 + V(x)

    def Lv(x, v):
        return np.asarray(v, dtype=float) + 0.0 * np.asarray(x, dtype=float)

    return HamiltonianSpec(
        eval_H=H, eval_Hp=Hp, eval_Hpp=Hpp, eval_V=V, eval_Vprime=Vp,
        kappa=1.0, gamma1=1.0, gamma2=2.0,
        growth_C=C, growth_C1=0.0, growth_C2=pot.lipschitz,
        separable=True, name="quadratic",
        params={"potential": pot.name, **pot.params},
        eval_Hppp=Hppp, eval_L=L, eval_Lv=Lv,
    )


def power_gamma2(gamma2: float = 2.0, potential: Potential | None = None,
                 p_range: float = 10.0) -> HamiltonianSpec:
    """``H(x, p) = (1 + p**2) ** (gamma2 / 2) - V(x)``.

    For ``gamma2 >= 2`` the convexity constant is ``gamma2`` (attained at
    p = 0). For ``1 < gamma2 < 2`` the second derivative decays at infinity,
    so ``kappa`` is the minimum over ``|p| <= p_range`` and holds only on that
    working range. ``gamma2 == 2`` carries the closed form
    ``L(x, v) = v**2 / 4 - 1 + V(x)``.
    """
    g = float(gamma2)
    if g <= 1:
        raise ConfigError("power_gamma2 needs gamma2 > 1", gamma2=g)
    pot = potential or _zero_potential()
    V, Vp = pot.V, pot.Vprime
    V0 = float(V(0.0))

    def H(x, p):
        p = np.asarray(p, dtype=float)
        return (1.0 + p * p) ** (0.5 * g) - V(x)

    def Hp(x, p):
        p = np.asarray(p, dtype=float)
        return g * p * (1.0 + p * p) ** (0.5 * g - 1.0) + 0.0 * np.asarray(x, dtype=float)

    def Hpp(x, p):
        p = np.asarray(p, dtype=float)
        s = 1.0 + p * p
        return g * s ** (0.5 * g - 2.0) * (1.0 + (g - 1.0) * p * p) + 0.0 * np.asarray(x, dtype=float)

    def Hppp(x, p):
        p = np.asarray(p, dtype=float)
        s = 1.0 + p * p
        # d/dp of g s^(g/2-2) (1 + (g-1) p^2)
        return g * p * s ** (0.5 * g - 3.0) * (
            (g - 4.0) * (1.0 + (g - 1.0) * p * p) + 2.0 * (g - 1.0) * s
        ) + 0.0 * np.asarray(x, dtype=float)

    ps = np.linspace(-p_range, p_range, 4001)
    hpp = Hpp(0.0, ps)
    kappa = g if g >= 2 else float(hpp.min())
    K = 2.0 ** max(0.5 * g - 1.0, 0.0)
    hp_const = 2.0 * g * 2.0 ** max(0.5 * g - 2.0, 0.0) if g >= 2 else g
    C = max(g * K, K - pot.lower_bound, 1.0 / g, V0, pot.lipschitz, hp_const,
            float(hpp.max()), float(np.abs(Hppp(0.0, ps)).max()))
    extra: dict[str, Any] = {}
    if g == 2.0:
        def L(x, v):
            return 0.25 * np.asarray(v, dtype=float) ** 2 - 1.0 + V(x)

        def Lv(x, v):
            return 0.5 * np.asarray(v, dtype=float) + 0.0 * np.asarray(x, dtype=float)

        extra = {"eval_L": L, "eval_Lv": Lv}

    return HamiltonianSpec(
        eval_H=H, eval_Hp=Hp, eval_Hpp=Hpp, eval_V=V, eval_Vprime=Vp,
        kappa=kappa, gamma1=1.0, gamma2=g,
        growth_C=C, growth_C1=0.0, growth_C2=pot.lipschitz,
        separable=True, name="power_gamma2",
        params={"gamma2": g, "potential": pot.name, **pot.params},
        eval_Hppp=Hppp, **extra,
    )


HAMILTONIAN_FAMILIES: dict[str, Callable[..., HamiltonianSpec]] = {
    "quadratic": quadratic,
    "power_gamma2": power_gamma2,
}


def make_hamiltonian(family: str, potential: str = "zero",
                     potential_params: dict[str, float] | None = None,
                     **params: Any) -> HamiltonianSpec:
    """Build a registered Hamiltonian from config-style names."""
    try:
        factory = HAMILTONIAN_FAMILIES[family]
    except KeyError:
        raise ConfigError(f"unknown Hamiltonian family {family!r}",
                          known=sorted(HAMILTONIAN_FAMILIES)) from None
    pot = make_potential(potential, **(potential_params or {}))
    try:
        return factory(potential=pot, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for family {family!r}: {exc}") from None


# --------------------------------------------------------------------------
# Legendre transform
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LagrangianView:
    """The Legendre transform of a Hamiltonian, as evaluators."""

    eval_L: ArrayFn
    eval_Lv: ArrayFn
    gamma2_conj: float
    closed_form: bool


def optimal_momentum(spec: HamiltonianSpec, x, v, *, max_expand: int = 60,
                     max_iter: int = 200) -> np.ndarray:
    """Maximizer p* of ``p -> -p v - H(x, p)``.

    The objective is strictly concave, so p* is the unique root of
    ``H_p(x, p) + v = 0``. The root is bracketed in ``[-P, P]`` with
    ``P = 10 C (1 + |v|)^(1/(gamma2-1))`` (doubled while the sign test
    fails), located by vectorized bisection and polished by one Newton step.

    Raises
    ------
    NumericalFailure
        If no bracket is found or bisection does not reach tolerance.
    """
    x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
    x, v = x.copy(), v.copy()
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise NumericalFailure("non-finite input to the Legendre transform")
    C = max(spec.growth_C, 1.0)
    P = 10.0 * C * (1.0 + np.abs(v)) ** (1.0 / (spec.gamma2 - 1.0))
    lo, hi = spec.p_star - P, spec.p_star + P
    for _ in range(max_expand):
        bad_lo = spec.eval_Hp(x, lo) + v > 0
        bad_hi = spec.eval_Hp(x, hi) + v < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, spec.p_star - 2.0 * (spec.p_star - lo), lo)
        hi = np.where(bad_hi, spec.p_star + 2.0 * (hi - spec.p_star), hi)
    else:
        idx = np.unravel_index(np.argmax(bad_lo | bad_hi), x.shape) if x.ndim else ()
        raise NumericalFailure("could not bracket the Legendre maximizer",
                               x=float(x[idx]), v=float(v[idx]))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        go_right = spec.eval_Hp(x, mid) + v < 0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= 4e-16 * np.maximum(1.0, np.abs(mid))):
            break
    else:
        width = hi - lo
        idx = np.unravel_index(np.argmax(width), x.shape) if x.ndim else ()
        raise NumericalFailure("Legendre maximization did not converge",
                               x=float(x[idx]), v=float(v[idx]))
    p = 0.5 * (lo + hi)
    step = (spec.eval_Hp(x, p) + v) / spec.eval_Hpp(x, p)
    return np.clip(p - step, lo, hi)


def legendre_transform(spec: HamiltonianSpec, x, v, *, use_closed_form: bool = True):
    """``L(x, v) = sup_p (-p v - H(x, p))``.

    Uses the registered closed form when available (and allowed), otherwise
    the numerical maximizer from :func:`optimal_momentum`. Returns a float
    for scalar inputs.
    """
    scalar = np.ndim(x) == 0 and np.ndim(v) == 0
    if use_closed_form and spec.eval_L is not None:
        out = spec.eval_L(x, v)
    else:
        p = optimal_momentum(spec, x, v)
        out = -p * np.asarray(v, dtype=float) - spec.eval_H(x, p)
    return float(out) if scalar else np.asarray(out)


def _numeric_Lv(spec: HamiltonianSpec, x, v):
    # envelope theorem: dL/dv = -p*(x, v)
    return -optimal_momentum(spec, x, v)


def lagrangian(spec: HamiltonianSpec, *, use_closed_form: bool = True) -> LagrangianView:
    """Evaluators for L and L_v."""
    closed = use_closed_form and spec.eval_L is not None and spec.eval_Lv is not None
    if closed:
        return LagrangianView(spec.eval_L, spec.eval_Lv, spec.gamma2_conj, True)

    def L(x, v):
        return legendre_transform(spec, x, v, use_closed_form=False)

    def Lv(x, v):
        return _numeric_Lv(spec, x, v)

    return LagrangianView(L, Lv, spec.gamma2_conj, False)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Vectorized golden-section maximization of a concave function."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol * np.maximum(1.0, np.abs(a) + np.abs(b))):
            break
        left = fc > fd
        # maximum lies in [a, d] where left, else in [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        f_new = f(np.where(left, new_c, new_d))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_next, d_next
    v = 0.5 * (a + b)
    return f(v)


def legendre_involution_check(spec: HamiltonianSpec, xs, ps) -> float:
    """Max error of the double conjugate against H on the tensor grid ``xs x ps``.

    The outer supremum over v is taken by golden-section search and the inner
    Lagrangian is always the numerical transform, so the check exercises
    nested numerical conjugates even when a closed form is registered.
    """
    X, P = np.meshgrid(np.asarray(xs, dtype=float), np.asarray(ps, dtype=float), indexing="ij")
    X, P = X.ravel(), P.ravel()
    C = max(spec.growth_C, 1.0)
    # the maximizer is v = -H_p(x, p); bracket it with the growth bound on H_p
    span = 2.0 * C * (np.abs(P) ** (spec.gamma2 - 1.0) + 1.0) + 1.0
    vc = -spec.eval_Hp(X, P)
    lo, hi = vc - span, vc + span

    def objective(v):
        return -P * v - legendre_transform(spec, X, v, use_closed_form=False)

    sup = _golden_max(objective, lo, hi)
    return float(np.max(np.abs(sup - spec.eval_H(X, P))))


def dual_pairing_check(spec: HamiltonianSpec, xs, ps, *, step: float = 1e-5) -> float:
    """Max of ``|p + L_v(x, -H_p(x, p))|`` over the sampled pairs.

    ``L_v`` is the registered closed form when present and a central
    difference of the numerical transform otherwise.
    """
    x, p = np.broadcast_arrays(np.asarray(xs, dtype=float), np.asarray(ps, dtype=float))
    v = -spec.eval_Hp(x, p)
    if spec.eval_Lv is not None:
        Lv = spec.eval_Lv(x, v)
    else:
        Lv = (legendre_transform(spec, x, v + step, use_closed_form=False)
              - legendre_transform(spec, x, v - step, use_closed_form=False)) / (2 * step)
    return float(np.max(np.abs(p + Lv)))


# --------------------------------------------------------------------------
# assumption checks
# --------------------------------------------------------------------------


@dataclass
class SampleBox:
    """Bounded sampling region for the assumption checks."""

    x_range: tuple[float, float] = (-3.0, 3.0)
    p_range: tuple[float, float] = (-5.0, 5.0)
    n_x: int = 201
    n_p: int = 201
    n_t: int = 201
    # the moment test integrates m0 over boxes x_range * 2**k, k < n_boxes
    n_boxes: int = 7

    def __post_init__(self) -> None:
        for lo, hi in (self.x_range, self.p_range):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError("sample box must be bounded and non-empty",
                                  x_range=self.x_range, p_range=self.p_range)
        if min(self.n_x, self.n_p, self.n_t) < 5 or self.n_boxes < 3:
            raise ConfigError("sample box too coarse")

    def xs(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.n_x)

    def ps(self) -> np.ndarray:
        return np.linspace(*self.p_range, self.n_p)


@dataclass
class AssumptionCheck:
    """Outcome of one assumption.

    ``margin`` is the smallest slack over the samples (negative means
    violated) and ``witness`` names the sample point realizing it.
    """

    name: str
    status: str
    margin: float | None = None
    witness: dict[str, float] = field(default_factory=dict)
    detail: str = ""
    values: dict[str, float] = field(default_factory=dict)


@dataclass
class AssumptionReport:
    checks: dict[str, AssumptionCheck]
    samples: dict[str, list[float]]

    @property
    def all_passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if c.status == "fail"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "all_passed": self.all_passed,
            "checks": {k: asdict(c) for k, c in self.checks.items()},
            "samples": self.samples,
        }

    def to_json(self, **kw: Any) -> str:
        return json.dumps(self.to_dict(), **kw)


def _worst(slack: np.ndarray, coords: dict[str, np.ndarray]) -> tuple[float, dict[str, float]]:
    k = int(np.argmin(slack))
    return float(slack.flat[k]), {n: float(a.flat[k]) for n, a in coords.items()}


def _status(margin: float, tol: float) -> str:
    return "pass" if margin >= -tol else "fail"


def _second_diff(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)


def _c2_growth(f: Callable, x: np.ndarray, h: float) -> tuple[float, float]:
    """Sup of the second difference of ``f`` at steps h and h/4.

    Bounded second derivatives keep the two values comparable; kinks and
    jumps make the finer one blow up by a factor of about 4 or 16.
    """
    coarse = float(np.max(np.abs(_second_diff(f, x, h))))
    xf = np.linspace(x[0], x[-1], 4 * (len(x) - 1) + 1)
    fine = float(np.max(np.abs(_second_diff(f, xf, h / 4.0))))
    return coarse, fine


def _is_c2(coarse: float, fine: float) -> bool:
    return fine <= 1.5 * coarse + 1e-6


def validate_assumptions(spec: HamiltonianSpec, data: ProblemData,
                         sample_box: SampleBox | None = None, *,
                         tol: float = 1e-10) -> AssumptionReport:
    """Check the standing assumptions on a bounded sample box.

    Returns one entry per assumption, keyed by a short slug:

    convexity    uniform convexity ``H_pp >= kappa``
    growth       growth sandwich and derivative bounds with the stored constants
    terminal     ``|u_T'| <= C`` and consistency of ``u_T'`` with ``u_T``
    supply       smoothness of Q (finite values, bounded second differences)
    moment       ``m0 >= 0`` with a finite moment of order ``gamma > gamma1``
    separable    separability, ``|H_pp|, |H_ppp| <= C`` and V bounded below
    lipschitz    V and u_T globally Lipschitz with bounded second derivatives
    convex_data  convexity of V and u_T

    Smoothness of m0 is reported under ``lipschitz`` but does not fail the
    check: the solvers only use m0 as a density.
    """
    box = sample_box or SampleBox()
    xs, ps = box.xs(), box.ps()
    X, P = np.meshgrid(xs, ps, indexing="ij")
    coords = {"x": X, "p": P}
    C, C1, C2 = spec.growth_C, spec.growth_C1, spec.growth_C2
    g1, g2 = spec.gamma1, spec.gamma2
    checks: dict[str, AssumptionCheck] = {}
    scale_tol = tol * (1.0 + np.abs(spec.eval_H(X, P)))

    # convexity
    hpp = spec.eval_Hpp(X, P)
    m, w = _worst(hpp - spec.kappa, coords)
    w["H_pp"] = float(spec.eval_Hpp(w["x"], w["p"]))
    w["kappa"] = spec.kappa
    checks["convexity"] = AssumptionCheck("uniform convexity", _status(m, tol * (1 + spec.kappa)),
                                    m, w, "H_pp - kappa on the sample grid")

    # growth
    H = spec.eval_H(X, P)
    ax, ap = np.abs(X) ** g1, np.abs(P) ** g2
    parts = {
        "lower": H - (-C2 * ax + ap / (C * g2) - C) + scale_tol,
        "upper": (-C1 * ax + C * ap / g2 + C) - H + scale_tol,
        "H_x": C * (ap + 1.0) - np.abs(spec.H_x(X, P)),
        "H_p": C * (np.abs(P) ** (g2 - 1.0) + 1.0) - np.abs(spec.eval_Hp(X, P)),
    }
    worst_name, worst_m, worst_w = "", np.inf, {}
    values = {}
    for pname, slack in parts.items():
        pm, pw = _worst(slack, coords)
        values[pname] = pm
        if pm < worst_m:
            worst_name, worst_m, worst_w = pname, pm, pw
    worst_w["inequality"] = worst_name  # type: ignore[assignment]
    checks["growth"] = AssumptionCheck("growth", _status(worst_m, tol), worst_m, worst_w,
                                    "minimum slack over the four growth inequalities",
                                    values)

    # terminal
    uTp = np.asarray(data.u_T_prime(xs), dtype=float)
    m, w = _worst(C - np.abs(uTp), {"x": xs})
    h = 1e-4
    fd = (np.asarray(data.u_T(xs + h)) - np.asarray(data.u_T(xs - h))) / (2 * h)
    consist = float(np.max(np.abs(fd - uTp)))
    status = _status(m, tol)
    if consist > 1e-5 * (1.0 + float(np.max(np.abs(uTp)))):
        status = "fail"
        k = int(np.argmax(np.abs(fd - uTp)))
        w = {"x": float(xs[k])}
    checks["terminal"] = AssumptionCheck(
        "terminal cost regularity", status, m, w,
        "C - |u_T'| and |u_T' - central difference of u_T|",
        {"derivative_mismatch": consist})

    # supply
    ts = np.linspace(0.0, data.T, box.n_t)
    qs = np.asarray(data.Q(ts), dtype=float)
    if not np.all(np.isfinite(qs)):
        k = int(np.argmax(~np.isfinite(qs)))
        checks["supply"] = AssumptionCheck("smooth supply", "fail", -np.inf,
                                        {"t": float(ts[k])}, "Q is not finite")
    else:
        inner = ts[1:-1]
        hq = data.T / (box.n_t - 1)
        coarse, fine = _c2_growth(data.Q, inner, hq)
        ok = _is_c2(coarse, fine)
        d2 = np.abs(_second_diff(data.Q, inner, hq))
        k = int(np.argmax(d2))
        checks["supply"] = AssumptionCheck(
            "smooth supply", "pass" if ok else "fail", None if ok else -(fine - coarse),
            {} if ok else {"t": float(inner[k])},
            "finite samples and bounded second differences under refinement",
            {"sup_Q_second_difference": coarse, "refined": fine})

    # moment
    checks["moment"] = _check_moment(spec, data, box)

    # separable
    if not spec.separable:
        checks["separable"] = AssumptionCheck("separability", "fail", None, {"x": 0.0, "p": 0.0},
                                        "Hamiltonian declared non-separable")
    else:
        sep = spec.eval_H(0.0, P) - (spec.eval_V(X) - spec.eval_V(0.0)) - H
        ms, ws = _worst(-np.abs(sep) + scale_tol, coords)
        hppp = np.abs(spec.H_ppp(X, P))
        mb, wb = _worst(C - np.maximum(hpp, hppp), coords)
        vmins = [float(np.min(spec.eval_V(np.linspace(box.x_range[0] * 2 ** k,
                                                        box.x_range[1] * 2 ** k, box.n_x))))
                 for k in range(box.n_boxes)]
        bounded_below = vmins[-1] >= vmins[-2] - 1e-9 * (1 + abs(vmins[-2]))
        m = min(ms, mb)
        w = ws if ms <= mb else wb
        status = _status(m, tol)
        detail = "identity H(x,p) = H(0,p) - (V(x) - V(0)), |H_pp|,|H_ppp| <= C, V bounded below"
        if not bounded_below:
            status = "fail"
            w = {"x": float(box.x_range[1] * 2 ** (box.n_boxes - 1))}
        checks["separable"] = AssumptionCheck("separability", status, m, w, detail,
                                        {"identity": ms, "derivative_bound": mb,
                                         "V_min_widest_box": vmins[-1]})

    # lipschitz
    wide = np.linspace(box.x_range[0] * 4, box.x_range[1] * 4, 4 * box.n_x)
    hx = (box.x_range[1] - box.x_range[0]) / (box.n_x - 1)
    lipV = float(np.max(np.abs(spec.eval_Vprime(wide))))
    lipU = float(np.max(np.abs(data.u_T_prime(wide))))
    lip_slack = C - max(lipV, lipU)
    vc, vf = _c2_growth(spec.eval_V, xs, hx)
    uc, uf = _c2_growth(data.u_T, xs, hx)
    mc, mf = _c2_growth(data.m0_density, xs, hx)
    failures = []
    if lip_slack < -tol:
        failures.append("lipschitz")
    if not _is_c2(vc, vf):
        failures.append("V''")
    if not _is_c2(uc, uf):
        failures.append("u_T''")
    w = {}
    if failures:
        if "lipschitz" in failures:
            src = spec.eval_Vprime if lipV >= lipU else data.u_T_prime
            w = {"x": float(wide[int(np.argmax(np.abs(src(wide))))])}
        else:
            src = spec.eval_V if "V''" in failures else data.u_T
            w = {"x": float(xs[int(np.argmax(np.abs(_second_diff(src, xs, hx))))])}
    checks["lipschitz"] = AssumptionCheck(
        "Lipschitz data with bounded second derivatives",
        "fail" if failures else "pass", lip_slack, w,
        "failed: " + ", ".join(failures) if failures else
        "m0 smoothness is informational only",
        {"lip_V": lipV, "lip_u_T": lipU, "sup_V''": vc, "sup_u_T''": uc,
         "sup_m0''": mc, "m0_second_difference_stable": float(_is_c2(mc, mf))})

    # convex_data
    cv = _second_diff(spec.eval_V, xs, hx)
    cu = _second_diff(data.u_T, xs, hx)
    mv, wv = _worst(cv + 1e-7, {"x": xs})
    mu, wu = _worst(cu + 1e-7, {"x": xs})
    m, w = (mv, wv) if mv <= mu else (mu, wu)
    w["function"] = "V" if mv <= mu else "u_T"  # type: ignore[assignment]
    checks["convex_data"] = AssumptionCheck("convex V and u_T", _status(m, 0.0), m, w,
                                    "second differences of V and u_T")

    samples = {"x": xs.tolist(), "p": ps.tolist(), "t": ts.tolist()}
    return AssumptionReport(checks, samples)


def _check_moment(spec: HamiltonianSpec, data: ProblemData, box: SampleBox) -> AssumptionCheck:
    gamma = data.gamma
    if gamma <= spec.gamma1:
        return AssumptionCheck("finite moment", "fail", gamma - spec.gamma1,
                               {"gamma": gamma, "gamma1": spec.gamma1},
                               "moment order must exceed gamma1")
    lo0, hi0 = box.x_range
    moments, masses, neg = [], [], np.inf
    neg_x = 0.0
    for k in range(box.n_boxes):
        xs = np.linspace(lo0 * 2 ** k, hi0 * 2 ** k, 2 ** k * (box.n_x - 1) * 4 + 1)
        dens = np.asarray(data.m0_density(xs), dtype=float)
        if dens.min() < neg:
            neg = float(dens.min())
            neg_x = float(xs[int(np.argmin(dens))])
        moments.append(float(np.trapezoid(np.abs(xs) ** gamma * dens, xs)))
        masses.append(float(np.trapezoid(dens, xs)))
    inc = np.diff(moments)
    scale = max(moments[-1], 1e-300)
    # shell increments of a convergent moment decay geometrically
    settled = inc[-1] <= 1e-10 * scale
    ratio = float(inc[-1] / inc[-2]) if inc[-2] > 1e-300 else 0.0
    converging = settled or ratio < 0.75
    values = {"moment_widest_box": moments[-1], "last_shell_ratio": ratio,
              "mass_widest_box": masses[-1]}
    if neg < -1e-14:
        return AssumptionCheck("finite moment", "fail", neg, {"x": neg_x},
                               "m0 takes negative values", values)
    if not converging:
        return AssumptionCheck(
            "finite moment", "fail", -ratio, {"x": float(hi0 * 2 ** (box.n_boxes - 1)),
                                              "gamma": gamma},
            "moment keeps growing on nested boxes", values)
    return AssumptionCheck("finite moment", "pass", float(gamma - spec.gamma1), {},
                           "moment converges on nested boxes", values)
