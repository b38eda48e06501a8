import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def planar_resonant():
    """(grid, params, ground state) for n=2, sigma=3, mu=9, omega=0 on 256^2, L=8."""
    from thgnls.functionals import PhysParams
    from thgnls.grid import make_grid
    from thgnls.groundstate import solve_ground_state

    grid = make_grid(2, 256, 8.0)
    p = PhysParams(3.0, 9.0, 0.0, 2)
    return grid, p, solve_ground_state(p, grid)


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines collected by tests/test_acceptance.py."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: int(k)):
        terminalreporter.write_line(VERDICTS[key])
