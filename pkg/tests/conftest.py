import pytest

from divesim import dynamics as dy
from divesim import formfactor as ff
from divesim import spectral as sp

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def measure():
    return ff.PowerLaw(nu=1, p=4.0)


@pytest.fixture(scope="session")
def model(measure):
    return sp.Model(measure, 0.5)


@pytest.fixture(scope="session")
def gap_model():
    return sp.Model(ff.IRCutoff(delta=1.0), 0.5)


@pytest.fixture(scope="session")
def schedule():
    return dy.PulseSchedule(E_lo=-1.0, E_m=0.5)


@pytest.fixture
def report():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def _report(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append((number, line))
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
