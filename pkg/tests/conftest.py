import numpy as np
import pytest

from degenlab import coefficients as co
from degenlab.exact import ExactSolution
from degenlab.solver import make_problem, solve

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_RESULTS


@pytest.fixture(scope="session")
def plaplace3_fine_run():
    """p = 3, eps = 0.05, h = 1/64 exact-data solve on Q_{3/4} (shared by two criteria)."""
    P = co.CoefficientParams.plaplace(3.0, 0.05)
    ex = ExactSolution.for_params(P, 2)
    spec = make_problem(P, ex, h=1.0 / 64)
    return spec, solve(spec), ex


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))
