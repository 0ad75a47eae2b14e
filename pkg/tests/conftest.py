import math

import numpy as np
import pytest

from logibranch.assembly import ProblemParams, assemble
from logibranch.mesh import DomainSpec, build_mesh


def make_forms(a, b, n=1024):
    return assemble(build_mesh(DomainSpec.interval(a, b), n))


@pytest.fixture(scope="session")
def half_pi():
    return make_forms(0.0, math.pi / 2)


@pytest.fixture(scope="session")
def two_pi():
    return make_forms(0.0, 2 * math.pi)


@pytest.fixture(scope="session")
def unit():
    return make_forms(0.0, 1.0)


@pytest.fixture(scope="session")
def params():
    return ProblemParams(p=2.0, q=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
