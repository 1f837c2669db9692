import sys

import numpy as np
import pytest

from rmplate.fem import ModelParams
from rmplate.manufactured import ExactSolution
from rmplate.mesh import build_mesh
from rmplate.study import StudyConfig, run_solve

BENCH = ModelParams(t=1.0 / 1024.0)


@pytest.fixture(scope="session")
def bench():
    return BENCH


@pytest.fixture(scope="session")
def exact():
    return ExactSolution(BENCH)


@pytest.fixture(scope="session")
def mesh1():
    return build_mesh(1)


@pytest.fixture(scope="session")
def mesh2():
    return build_mesh(2)


@pytest.fixture(scope="session")
def mesh4():
    return build_mesh(4)


@pytest.fixture(scope="session")
def level4():
    """Full benchmark pipeline on n=4."""
    return run_solve(StudyConfig(levels=(4,)), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
