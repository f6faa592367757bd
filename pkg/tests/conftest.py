import numpy as np
import pytest

from bridgemde import build_time_grid, builtin, lebesgue_measure

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def grid500():
    return build_time_grid(1.0, 500)


@pytest.fixture
def mu500(grid500):
    return lebesgue_measure(grid500)


@pytest.fixture
def grid2000():
    return build_time_grid(1.0, 2000)


@pytest.fixture(params=["CM1", "LM1", "SM1", "KM1"])
def any_builtin(request):
    return builtin(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)
