from __future__ import annotations

import numpy as np
import pytest

from mfgdual import make_problem, quadratic
from mfgdual.mfg_solver import GridSpec

# acceptance outcomes, filled by tests/test_acceptance.py and printed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def qspec():
    return quadratic()


@pytest.fixture(scope="session")
def lq0():
    return make_problem(1.0, {"name": "constant", "q": 1.0}, {"name": "zero"}, {"name": "bump"},
                        name="lq0")


@pytest.fixture(scope="session")
def lqlin():
    return make_problem(1.0, {"name": "constant", "q": 1.0}, {"name": "linear", "slope": 1.0},
                        {"name": "bump"}, name="lqlin")


@pytest.fixture(scope="session")
def cosq():
    return make_problem(1.0, {"name": "cos", "amplitude": 1.0, "frequency": 1.0}, {"name": "zero"},
                        {"name": "bump"}, name="cosQ")


@pytest.fixture(scope="session")
def still():
    """No supply, no terminal cost: the rest state is the solution."""
    return make_problem(1.0, {"name": "constant", "q": 0.0}, {"name": "zero"}, {"name": "bump"},
                        name="still")


@pytest.fixture
def grid32():
    return GridSpec(1.0, 3.0, 32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
