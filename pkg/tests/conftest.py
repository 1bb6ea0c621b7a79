import numpy as np
import pytest

from fracmix.mesh import assemble, build_coefficients, build_domain
from fracmix.solver import SolverConfig, limit_sweep, run
from fracmix.spectral import eigendecompose

STANDARD = SolverConfig(s=0.5, delta=1e-2, mu=1e-2, dt=1e-4, t_end=0.1)
HALVINGS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)

# acceptance lines collected during the session, printed in the summary
ACCEPTANCE_LINES = []


def make_problem(dim=1, res=100, gamma0="left", coeff="identity", mass_mode="lumped"):
    dom = build_domain(dim, res, gamma0)
    ops = assemble(dom, build_coefficients(dom, coeff), mass_mode)
    return dom, ops, eigendecompose(ops)


def sine_data(dom):
    return np.sin(0.5 * np.pi * dom.node_coords[:, 0])


@pytest.fixture(scope="session")
def mixed1d():
    """1D, Gamma_0 = {0}, resolution 100, identity coefficient."""
    return make_problem()


@pytest.fixture(scope="session")
def standard_run(mixed1d):
    dom, ops, dec = mixed1d
    return run(sine_data(dom), STANDARD, dec, ops)


@pytest.fixture(scope="session")
def diagonal_sweep(mixed1d):
    dom, ops, dec = mixed1d
    return limit_sweep(sine_data(dom), STANDARD, HALVINGS, HALVINGS, dec, ops, mode="diagonal")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
