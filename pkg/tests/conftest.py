import numpy as np
import pytest

from multicoag import (
    ClusterDistribution,
    Constant,
    SolverConfig,
    Source,
    TruncatedKernel,
    TruncationParams,
    evolve_to_steady,
)

# lines printed by the acceptance suite, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def steady(base, src, eps, M, tol=1e-8, **cfg):
    kernel = TruncatedKernel(base, TruncationParams(eps, M, max(src.reach, 1)))
    res = evolve_to_steady(ClusterDistribution(src.dim), SolverConfig(steady_tol=tol, **cfg), kernel, src)
    return kernel, res


@pytest.fixture(scope="session")
def run_2d_const():
    """d=2, unit constant kernel, one monomer of each species injected, M=48."""
    src = Source(2, {(1, 0): 1.0, (0, 1): 1.0})
    kernel, res = steady(Constant(1.0), src, 0.0, 48)
    return kernel, src, res


@pytest.fixture(scope="session")
def run_1d_const():
    src = Source(1, {(1,): 1.0})
    kernel, res = steady(Constant(1.0), src, 0.0, 256)
    return kernel, src, res


@pytest.fixture(scope="session")
def run_2d_skew():
    """d=2 with injection (3, 1): the localization scenario."""
    src = Source(2, {(1, 0): 3.0, (0, 1): 1.0})
    kernel, res = steady(Constant(1.0), src, 0.0, 64, record_every=50)
    return kernel, src, res


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
