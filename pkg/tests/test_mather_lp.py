from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from _toys import make_toy
from mfgdual import make_problem
from mfgdual.errors import ConfigError, InfeasibleError, OracleError
from mfgdual.mather_lp import (INFEASIBLE, DiscreteMeasure, MeasureGrid, assemble_constraints,
                               brute_force_lp_oracle, conjugate_test_family, constraint_residuals,
                               dense_simplex, displacement_defect, h_value, induced_measure,
                               measure_cost_vector, reference_measure, solve_primal,
                               translated_terminal, verify_conjugate_bound)
from mfgdual.mfg_solver import GridSpec, fixed_point_solve


def mgrid(N=8, Nv=4, R=3.0, Vmax=2.0):
    # twice as many space intervals as time steps keeps transport tails off the walls
    return MeasureGrid(1.0, R, N, 2 * N, Nv, Vmax)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def test_row_counts(qspec, lq0):
    g = mgrid(6, 4)
    free = assemble_constraints(g, lq0, qspec, "free")
    assert free.A.shape[0] == (g.Nt + 1) * (g.Nx + 1) + 2 * g.Nt + 1
    fixed = assemble_constraints(g, lq0, qspec, "fixed", lq0.sample_m0(g.x, g.dx) * g.dx)
    assert fixed.A.shape[0] == (g.Nt + 1) * (g.Nx + 1) + 2 * g.Nt


def test_time_test_function_gives_total_mass(qspec, lq0):
    # phi = t on the hats: each column contributes dt, so sum(mu) = T
    g = mgrid(6, 4)
    cs = assemble_constraints(g, lq0, qspec, "free")
    y = np.zeros(cs.A.shape[0])
    y[cs.rows_of("slice-mass")] = 1.0
    ref = reference_measure(g, lq0)
    assert float(y @ (cs.A @ cs.to_vector(ref))) == pytest.approx(g.T, abs=1e-13)


def test_displacement_ray_annihilates_measure_columns(qspec, lq0):
    g = MeasureGrid(1.0, 1.5, 3, 3, 3, 2.0)
    cs = assemble_constraints(g, lq0, qspec, "fixed", translated_terminal(g, lq0, 0.3, mode="sharp"))
    _, y = cs.farkas_rays[0]
    assert np.max(np.abs(cs.A.T @ y)) < 1e-14
    # b.y / dt is the displacement defect of the fixed terminal measure
    assert float(cs.b @ y) / g.dt == pytest.approx(
        displacement_defect(g, lq0, cs.nu_fixed), abs=1e-13)


def test_balance_row_zero_on_supply_velocity(qspec):
    data = make_problem(supply={"name": "constant", "q": 1.0})
    g = mgrid(4, 4)
    cs = assemble_constraints(g, data, qspec, "free")
    mu = np.zeros(g.shape)
    k = int(np.argmin(np.abs(g.v - 1.0)))
    mu[:, g.Nx // 2, k] = g.dt
    nu = np.zeros(g.Nx + 1)
    r = cs.A @ cs.to_vector(DiscreteMeasure(g, mu, nu)) - cs.b
    assert np.max(np.abs(r[cs.rows_of("balance")])) == 0.0


def test_fixed_mode_validation(qspec, lq0):
    g = mgrid(4, 4)
    with pytest.raises(ConfigError):
        assemble_constraints(g, lq0, qspec, "fixed", None)
    with pytest.raises(ConfigError):
        assemble_constraints(g, lq0, qspec, "fixed", np.full(g.Nx + 1, 0.5))
    with pytest.raises(ConfigError):
        assemble_constraints(g, lq0, qspec, "sideways")


def test_triplet_export_roundtrip(qspec, lq0):
    cs = assemble_constraints(mgrid(3, 2), lq0, qspec, "free")
    text = cs.export_triplets()
    assert text.startswith(f"# rows {cs.A.shape[0]} cols {cs.A.shape[1]}")
    assert text.count("\n") == 4 + cs.A.nnz + cs.A.shape[0] + cs.A.shape[1]


# --------------------------------------------------------------------------
# reference and induced measures
# --------------------------------------------------------------------------

def test_reference_measure_rest(qspec, still):
    g = mgrid(8, 4)
    ref = reference_measure(g, still)
    m0w = still.sample_m0(g.x, g.dx) * g.dx
    k0 = int(np.argmin(np.abs(g.v)))
    expected = np.zeros(g.shape)
    expected[:, :, k0] = g.dt * m0w[None, :]
    assert np.max(np.abs(ref.mu - expected)) < 1e-15
    cs = assemble_constraints(g, still, qspec, "free")
    res = constraint_residuals(cs, ref)
    assert max(res[k] for k in ("holonomy", "balance", "slice-mass", "terminal-mass")) <= 1e-12


def test_reference_measure_translation(qspec, lq0):
    g = mgrid(16, 8)
    ref = reference_measure(g, lq0)
    m0w = lq0.sample_m0(g.x, g.dx) * g.dx
    assert float(g.x @ ref.nu - g.x @ m0w) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(ref.slice_masses(), g.dt, atol=1e-15)
    cs = assemble_constraints(g, lq0, qspec, "free")
    res = constraint_residuals(cs, ref)
    assert res["holonomy"] <= 1e-13 and res["balance"] <= 1e-13


def test_induced_measure_lq0_all_mass_at_supply(qspec, lq0):
    g = mgrid(16, 8)
    sol = fixed_point_solve(qspec, lq0, GridSpec(1.0, 3.0, 16, 32), 0.0)
    ind = induced_measure(sol, g, qspec, lq0)
    k1 = int(np.argmin(np.abs(g.v - 1.0)))
    # the diffusive tail of upwind transport brushes the right wall; the clipped
    # remainder is all that leaves v = 1
    assert ind.mu[:, :, k1].sum() >= g.T * (1 - 1e-4)
    assert np.abs(ind.info["velocity_shift"]).max() < 1e-4
    cs = assemble_constraints(g, lq0, qspec, "free")
    res = constraint_residuals(cs, ind)
    assert res["balance"] <= 1e-10
    assert max(res["holonomy_per_dt"], res["slice-mass"]) <= 5 * (g.dx + g.dt)


def test_induced_measure_rest(qspec, still):
    g = mgrid(8, 4)
    sol = fixed_point_solve(qspec, still, GridSpec(1.0, 3.0, 8, 16), 0.0)
    ind = induced_measure(sol, g, qspec, still)
    k0 = int(np.argmin(np.abs(g.v)))
    assert ind.mu[:, :, k0].sum() == pytest.approx(g.T, abs=1e-14)
    m0w = still.sample_m0(g.x, g.dx) * g.dx
    assert np.max(np.abs(ind.mu[:, :, k0] - g.dt * m0w[None, :])) < 1e-15


# --------------------------------------------------------------------------
# first-order solver
# --------------------------------------------------------------------------

def test_solve_primal_lq0_desk_grid(qspec, lq0):
    g = MeasureGrid(1.0, 3.0, 16, 16, 16, 2.0)
    cs = assemble_constraints(g, lq0, qspec, "free")
    res = solve_primal(cs, tol=1e-6, warm_start=reference_measure(g, lq0))
    assert res.value == pytest.approx(0.5, abs=0.02)
    measure, value, cert = res
    assert value == res.value and cert.dual_value == pytest.approx(value, abs=1e-4)


def test_solve_primal_lqlin(qspec, lqlin):
    g = MeasureGrid(1.0, 3.0, 16, 16, 8, 2.0)
    cs = assemble_constraints(g, lqlin, qspec, "free")
    res = solve_primal(cs, tol=1e-6, warm_start=reference_measure(g, lqlin))
    assert res.value == pytest.approx(1.5, abs=0.05)


def test_small_toy_matches_oracle(qspec):
    g = MeasureGrid(1.0, 1.5, 2, 2, 3, 2.0)
    data = make_problem(density={"name": "gaussian"})
    cs = assemble_constraints(g, data, qspec, "free")
    assert solve_primal(cs, tol=1e-11).value == pytest.approx(brute_force_lp_oracle(cs), abs=1e-9)


def test_infeasible_witness_names_displacement(qspec, lq0):
    g = mgrid(8, 4)
    cs = assemble_constraints(g, lq0, qspec, "fixed", translated_terminal(g, lq0, 0.3, mode="sharp"))
    with pytest.raises(InfeasibleError) as info:
        solve_primal(cs)
    w = info.value.witness
    assert w["identity"] == "displacement"
    assert w["defect"] == pytest.approx(-0.7, abs=1e-12)


# --------------------------------------------------------------------------
# dense simplex oracle
# --------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(12))
def test_oracle_toys(seed):
    toy = make_toy(seed)
    if toy.kind == "infeasible":
        with pytest.raises(InfeasibleError):
            brute_force_lp_oracle(toy.cs)
        with pytest.raises(InfeasibleError):
            solve_primal(toy.cs, tol=1e-10)
    else:
        a = brute_force_lp_oracle(toy.cs)
        b = solve_primal(toy.cs, tol=1e-10, max_iter=400000).value
        assert a == pytest.approx(b, abs=1e-7)


def test_oracle_degenerate_multiple_optima():
    # min x1 + x2 s.t. x1 + x2 + x3 = 1, x3 = 1: every split with x1 = x2 = 0 is optimal
    A = np.array([[1.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0], [1.0, 1.0, 2.0, 0.0]])
    b = np.array([1.0, 1.0, 2.0])
    c = np.array([1.0, 1.0, 0.0, 0.0])
    res = dense_simplex(A, b, c)
    assert res.value == pytest.approx(0.0, abs=1e-14)
    assert res.dropped_rows == [2] or len(res.dropped_rows) == 1


def test_oracle_inconsistent_rows():
    A = np.array([[1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(InfeasibleError):
        dense_simplex(A, np.array([1.0, 3.0]), np.zeros(2))


def test_oracle_unbounded():
    with pytest.raises(OracleError):
        dense_simplex(np.array([[1.0, -1.0]]), np.array([1.0]), np.array([0.0, -1.0]))


def test_oracle_size_guard(qspec, lq0):
    cs = assemble_constraints(mgrid(8, 4), lq0, qspec, "free")
    with pytest.raises(OracleError):
        brute_force_lp_oracle(cs)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), m=st.integers(1, 6), n=st.integers(2, 12))
def test_simplex_agrees_with_highs(seed, m, n):
    # random bounded feasible LPs: feasibility from a known x0, boundedness from c > 0
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    if m > 1 and rng.random() < 0.3:
        A[-1] = A[0] + A[1 % m]            # a redundant row
    x0 = rng.uniform(0, 1, n) * (rng.random(n) < 0.6)
    b = A @ x0
    c = rng.uniform(0.1, 2.0, n)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert ref.status == 0
    assert dense_simplex(A, b, c).value == pytest.approx(ref.fun, abs=1e-8)


# --------------------------------------------------------------------------
# h-function and conjugate bound
# --------------------------------------------------------------------------

def test_h_rest_is_zero(qspec, still):
    g = mgrid(8, 4)
    nu = still.sample_m0(g.x, g.dx) * g.dx
    assert h_value(g, still, qspec, nu) == pytest.approx(0.0, abs=1e-3)


def test_h_infeasible_marker(qspec, lq0):
    g = mgrid(8, 4)
    assert h_value(g, lq0, qspec, translated_terminal(g, lq0, 0.2, mode="sharp")) == INFEASIBLE


def test_conjugate_bound_family(qspec, lqlin):
    g = mgrid(8, 4)
    ref = reference_measure(g, lqlin)
    cost = measure_cost_vector(g, qspec, lqlin)
    fam = conjugate_test_family(g, cost, n_random=20)
    rep = verify_conjugate_bound(ref, cost, fam)
    assert rep.holds
    assert abs(rep.margins[0]) < 1e-12                 # phi = cost is the equality case
    assert rep.margins[1] < 0                          # phi = 0 is strict for L with varying sign
    assert np.all(rep.margins <= 1e-10)


def test_discrete_measure_shape_check():
    g = mgrid(2, 2)
    with pytest.raises(ConfigError):
        DiscreteMeasure(g, np.zeros((1, 1, 1)), np.zeros(g.Nx + 1))
