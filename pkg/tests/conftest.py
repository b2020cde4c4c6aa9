import warnings

import pytest

from carbon_hjb.grid import ContainmentWarning, GridSpec, build_grid
from carbon_hjb.model import validate_params

# lines emitted by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def params():
    return validate_params({})


def quiet_grid(spec, params=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ContainmentWarning)
        return build_grid(spec, params)


@pytest.fixture(scope="session")
def small_grid():
    """Coarse box that is still wide enough for the boundary at moderate y."""
    return quiet_grid(GridSpec(x_min=-3.0, x_max=9.0, y_min=-1.0, y_max=1.0, nx=121, ny=11, nt=50))
