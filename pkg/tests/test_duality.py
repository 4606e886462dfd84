from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgdual import make_problem, quadratic
from mfgdual.duality import (CSV_HEADER, _gap_decreasing, dual_value, gap_report, lift_mfg_dual,
                             measure_cost, wasserstein1)
from mfgdual.errors import ConfigError
from mfgdual.hamiltonians import lagrangian
from mfgdual.mather_lp import (MeasureGrid, assemble_constraints, brute_force_lp_oracle,
                               induced_measure, reference_measure, solve_primal)
from mfgdual.mfg_solver import GridSpec, fixed_point_solve


def test_dual_value_closed_forms(qspec, lq0, lqlin, still):
    g = GridSpec(1.0, 3.0, 32, 48)
    assert dual_value(fixed_point_solve(qspec, lq0, g, 0.0), lq0) == pytest.approx(0.5, abs=1e-2)
    assert dual_value(fixed_point_solve(qspec, lqlin, g, 0.0), lqlin) == pytest.approx(1.5, abs=3e-2)
    assert dual_value(fixed_point_solve(qspec, still, g, 0.0), still) == pytest.approx(0.0, abs=1e-14)


def test_measure_cost_reference_and_rest(qspec, lq0, still):
    g = MeasureGrid(1.0, 3.0, 16, 32, 8, 2.0)
    view = lagrangian(qspec)
    assert measure_cost(reference_measure(g, lq0), view, lq0.u_T_prime) == pytest.approx(0.5, abs=1e-12)
    assert measure_cost(reference_measure(g, still), view, still.u_T_prime) == pytest.approx(0.0, abs=1e-15)


def test_measure_cost_induced_lqlin(qspec, lqlin):
    g = MeasureGrid(1.0, 3.0, 16, 32, 8, 2.0)
    sol = fixed_point_solve(qspec, lqlin, GridSpec(1.0, 3.0, 16, 32), 0.0)
    cost = measure_cost(induced_measure(sol, g, qspec, lqlin), lagrangian(qspec), lqlin.u_T_prime)
    assert cost == pytest.approx(1.5, abs=5e-2)


@pytest.mark.parametrize("name", ["lq0", "cosq"])
def test_lifted_dual_is_feasible_lower_bound(qspec, name, request):
    data = request.getfixturevalue(name)
    g = MeasureGrid(1.0, 3.0, 16, 16, 8, 2.0)
    cs = assemble_constraints(g, data, qspec, "free")
    sol = fixed_point_solve(qspec, data, GridSpec(1.0, 3.0, 16, 16), 0.0)
    lifted = lift_mfg_dual(cs, sol, data)
    # exact dual feasibility: c - A^T y >= 0 on every column
    assert np.min(cs.c - cs.A.T @ lifted.y) >= -1e-12
    assert lifted.value == pytest.approx(float(cs.b @ lifted.y), abs=1e-14)
    primal = solve_primal(cs, tol=1e-7, dual_start=lifted.y).value
    assert lifted.value <= primal + 1e-6


def test_wasserstein1():
    x = np.linspace(0, 1, 11)
    a = np.zeros(11)
    b = np.zeros(11)
    a[0], b[10] = 1.0, 1.0
    assert wasserstein1(x, a, b) == pytest.approx(1.0, abs=1e-14)
    assert wasserstein1(x, a, a) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=6))
def test_gap_decreasing_floor(gaps):
    assert _gap_decreasing(gaps, 2.0)
    if all(abs(b) <= abs(a) for a, b in zip(gaps, gaps[1:])):
        assert _gap_decreasing(gaps, 0.0)


def test_gap_report_oracle_pass_through(qspec):
    data = make_problem(density={"name": "gaussian"}, supply={"name": "constant", "q": 0.5})
    rep = gap_report(qspec, data, [(2, 2, 3)], (), R=1.5, lp_method="oracle", validate=False,
                     max_blocked_mass=1.0)
    cs = assemble_constraints(MeasureGrid(1.0, 1.5, 2, 2, 3, 2.0), data, qspec, "free")
    oracle = brute_force_lp_oracle(cs)
    sol = fixed_point_solve(qspec, data, GridSpec(1.0, 1.5, 2, 2), 0.0)
    assert rep.primal_value == oracle
    assert rep.gap == oracle - dual_value(sol, data)


def test_gap_report_lq0_small_ladder(qspec, lq0):
    rep = gap_report(qspec, lq0, [8, 16], (0.1, 0.05))
    assert [h.level for h in rep.history] == ["8x8x4", "16x16x8"]
    assert rep.checks["sandwich"]
    assert rep.history[-1].relative_gap <= 0.1
    d = json.loads(rep.to_json())
    assert d["checks"] == rep.checks
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 3


def test_gap_report_validation(qspec, lq0):
    with pytest.raises(ConfigError):
        gap_report(qspec, lq0, [], ())
    with pytest.raises(ConfigError):
        gap_report(qspec, lq0, [8], (), lp_method="interior")
    bad = make_problem(density={"name": "cauchy"})
    with pytest.raises(ConfigError):
        gap_report(qspec, bad, [8], ())


def test_gap_report_threads_match_serial(qspec, lq0):
    a = gap_report(qspec, lq0, [8, 12], (), workers=1)
    b = gap_report(qspec, lq0, [8, 12], (), workers=2)
    assert [h.primal for h in a.history] == [h.primal for h in b.history]
