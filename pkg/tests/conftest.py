import math
import warnings

import numpy as np
import pytest

from capillary_lp.cap_geometry import make_domain
from capillary_lp.config import even_bump
from capillary_lp.curvature import CurvatureSpec
from capillary_lp.solver import ProblemSpec, solve

# Acceptance results collected as (criterion, passed, detail).
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def record():
    def _record(criterion: int, passed: bool, detail: str):
        line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE.append((criterion, bool(passed), detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def solve_quiet(spec, config=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve(spec) if config is None else solve(spec, config)


def make_spec(domain, phi, p, kind="sigma_k"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ProblemSpec(domain, CurvatureSpec(kind, 1), p, phi)


@pytest.fixture(scope="session")
def bump_solution():
    """Even, non-axisymmetric solved instance at theta = pi/4, p = 1.5."""
    dom = make_domain(math.pi / 4, 2, 33, 64)
    spec = make_spec(dom, even_bump(dom, 0.5, 0.5), 1.5)
    return solve_quiet(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
