from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgdual import make_problem
from mfgdual.errors import ConfigError
from mfgdual.hamiltonians import (HamiltonianSpec, SampleBox, dual_pairing_check, lagrangian,
                                  legendre_involution_check, legendre_transform, make_hamiltonian,
                                  make_potential, optimal_momentum, power_gamma2, quadratic,
                                  validate_assumptions)


def quartic() -> HamiltonianSpec:
    """``H = p**4 / 4``; convex but only degenerately so at p = 0."""
    zero = lambda x: 0.0 * np.asarray(x, dtype=float)  # noqa: E731
    return HamiltonianSpec(
        eval_H=lambda x, p: 0.25 * np.asarray(p, dtype=float) ** 4 + zero(x),
        eval_Hp=lambda x, p: np.asarray(p, dtype=float) ** 3 + zero(x),
        eval_Hpp=lambda x, p: 3.0 * np.asarray(p, dtype=float) ** 2 + zero(x),
        eval_V=zero, eval_Vprime=zero,
        kappa=1e-6, gamma1=1.0, gamma2=4.0, growth_C=4.0, growth_C1=0.0, growth_C2=0.0,
        separable=True, name="quartic")


def grid_conjugate(H, v, lo=-10.0, hi=10.0, step=1e-5):
    # brute-force oracle: maximize -p v - H(p) on a fine p grid
    p = np.arange(lo, hi + step / 2, step)
    return float(np.max(-p * v - H(p)))


# --------------------------------------------------------------------------
# Legendre transform
# --------------------------------------------------------------------------

def test_quadratic_self_dual():
    assert legendre_transform(quadratic(), 0.0, 1.0) == pytest.approx(0.5, abs=1e-14)
    assert legendre_transform(quadratic(), 0.0, 1.0, use_closed_form=False) == pytest.approx(0.5, abs=1e-12)


def test_shifted_quadratic_conjugate():
    spec = power_gamma2(2.0)
    assert legendre_transform(spec, 0.0, 2.0) == pytest.approx(0.0, abs=1e-14)
    assert legendre_transform(spec, 0.0, 2.0, use_closed_form=False) == pytest.approx(0.0, abs=1e-10)


def test_quartic_conjugate_matches_grid_oracle():
    spec = quartic()
    oracle = grid_conjugate(lambda p: 0.25 * p ** 4, 1.0)
    value = legendre_transform(spec, 0.0, 1.0)
    assert oracle == pytest.approx(0.75, abs=1e-8)
    assert value == pytest.approx(oracle, abs=1e-6)
    assert value == pytest.approx(0.75, abs=1e-12)


@pytest.mark.parametrize("g2", [1.5, 2.0, 3.0])
def test_numeric_conjugate_matches_grid_oracle_power(g2):
    spec = power_gamma2(g2)
    for v in (-1.3, 0.0, 0.7):
        oracle = grid_conjugate(lambda p: (1 + p * p) ** (g2 / 2), v, -8, 8, 1e-4)
        assert legendre_transform(spec, 0.0, v, use_closed_form=False) == pytest.approx(oracle, abs=1e-7)


def test_closed_form_agrees_with_numeric_on_grid():
    for spec in (quadratic(make_potential("smooth_abs")), power_gamma2(2.0)):
        X, V = np.meshgrid(np.linspace(-2, 2, 9), np.linspace(-3, 3, 13), indexing="ij")
        a = legendre_transform(spec, X, V)
        b = legendre_transform(spec, X, V, use_closed_form=False)
        assert np.max(np.abs(a - b)) < 1e-10


def test_optimal_momentum_solves_first_order_condition():
    spec = power_gamma2(1.5)
    v = np.linspace(-1.4, 1.4, 15)
    p = optimal_momentum(spec, 0.0, v)
    assert np.max(np.abs(spec.eval_Hp(0.0, p) + v)) < 1e-10


def test_lagrangian_view_numeric_derivative():
    spec = power_gamma2(3.0)
    view = lagrangian(spec)
    assert not view.closed_form
    v, h = 0.4, 1e-5
    fd = (view.eval_L(0.0, v + h) - view.eval_L(0.0, v - h)) / (2 * h)
    assert float(view.eval_Lv(0.0, v)) == pytest.approx(fd, abs=1e-7)


# --------------------------------------------------------------------------
# involution and pairing
# --------------------------------------------------------------------------

def test_involution_quadratic():
    xs, ps = np.linspace(-2, 2, 11), np.linspace(-2, 2, 11)
    assert legendre_involution_check(quadratic(), xs, ps) <= 1e-8


def test_involution_quartic():
    xs, ps = np.linspace(-1, 1, 3), np.linspace(-2, 2, 9)
    assert legendre_involution_check(quartic(), xs, ps) <= 1e-5


def test_involution_power_two():
    xs, ps = np.linspace(-1, 1, 3), np.linspace(-2, 2, 9)
    assert legendre_involution_check(power_gamma2(2.0), xs, ps) <= 1e-6


def test_pairing_cases():
    assert dual_pairing_check(quadratic(), 0.0, 1.0) == 0.0
    assert dual_pairing_check(quartic(), 0.0, 0.5) <= 1e-6
    assert dual_pairing_check(power_gamma2(2.0).with_closed_forms(False), 0.0, -1.0) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), p=st.floats(-4, 4), v=st.floats(-4, 4),
       g2=st.sampled_from([1.5, 2.0, 2.5]))
def test_fenchel_young(x, p, v, g2):
    # H(x, p) + L(x, v) >= -p v, with equality at v = -H_p(x, p)
    spec = power_gamma2(g2, make_potential("smooth_abs"))
    L = legendre_transform(spec, x, v, use_closed_form=False)
    assert float(spec.eval_H(x, p)) + L >= -p * v - 1e-9
    v_star = -float(spec.eval_Hp(x, p))
    L_star = legendre_transform(spec, x, v_star, use_closed_form=False)
    assert float(spec.eval_H(x, p)) + L_star == pytest.approx(-p * v_star, abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(v1=st.floats(-3, 3), v2=st.floats(-3, 3), lam=st.floats(0, 1))
def test_lagrangian_convex_in_v(v1, v2, lam):
    spec = power_gamma2(1.5)
    L = lambda v: legendre_transform(spec, 0.3, v, use_closed_form=False)  # noqa: E731
    mid = lam * v1 + (1 - lam) * v2
    assert L(mid) <= lam * L(v1) + (1 - lam) * L(v2) + 1e-9


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-5, 5), p=st.floats(-5, 5))
def test_builtin_hpp_bounded_below_by_kappa(x, p):
    for spec in (quadratic(make_potential("smooth_abs")), power_gamma2(2.0), power_gamma2(3.0)):
        assert float(spec.eval_Hpp(x, p)) >= spec.kappa - 1e-12


# --------------------------------------------------------------------------
# construction and assumptions
# --------------------------------------------------------------------------

def test_make_hamiltonian_registry():
    assert make_hamiltonian("quadratic").name == "quadratic"
    assert make_hamiltonian("power_gamma2", gamma2=3.0).gamma2 == 3.0
    with pytest.raises(ConfigError):
        make_hamiltonian("cubic")
    with pytest.raises(ConfigError):
        make_hamiltonian("quadratic", potential="nope")
    with pytest.raises(ConfigError):
        power_gamma2(1.0)


def test_assumptions_pass_for_lq0_uniform():
    data = make_problem(1.0, {"name": "constant", "q": 1.0}, {"name": "zero"},
                        {"name": "uniform", "left": -1.0, "right": 1.0})
    rep = validate_assumptions(quadratic(), data)
    assert rep.all_passed, rep.failed()
    assert set(rep.checks) == {"convexity", "growth", "terminal", "supply", "moment",
                               "separable", "lipschitz", "convex_data"}
    assert rep.to_dict()["all_passed"] is True


def test_misdeclared_kappa_fails_with_witness():
    spec = dataclasses.replace(quadratic(), kappa=2.0)
    rep = validate_assumptions(spec, make_problem())
    assert rep.failed() == ["convexity"]
    check = rep.checks["convexity"]
    assert check.margin == pytest.approx(-1.0)
    assert check.witness["H_pp"] == pytest.approx(1.0)


def test_heavy_tail_moment_flagged():
    data = make_problem(1.0, density={"name": "cauchy"}, gamma=2.0)
    rep = validate_assumptions(quadratic(), data)
    assert "moment" in rep.failed()


def test_nonconvex_terminal_flagged():
    data = make_problem(1.0, terminal={"name": "smooth_abs", "strength": -1.0})
    rep = validate_assumptions(quadratic(), data)
    assert "convex_data" in rep.failed()


def test_sample_box_rejects_unbounded():
    with pytest.raises(ConfigError):
        SampleBox(x_range=(-np.inf, 1.0))
    with pytest.raises(ConfigError):
        SampleBox(p_range=(1.0, 1.0))
