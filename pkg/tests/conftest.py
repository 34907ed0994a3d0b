import numpy as np
import pytest

from glfem.fe_space import build_space
from glfem.gl_model import ModelParams, potential
from glfem.mesh import build_uniform
from glfem.optimizer import SolverConfig, ncg_minimize


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


@pytest.fixture(scope="session")
def kappa8():
    return ModelParams(8.0, potential("paper_trig"))


@pytest.fixture(scope="session")
def minimizer8(kappa8):
    """Converged and verified kappa=8 minimizer on P2, level 4 (N=1089)."""
    s = build_space(build_uniform(4), 2)
    res = ncg_minimize(s, kappa8, SolverConfig())
    assert res.status == "minimizer"
    return res


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
