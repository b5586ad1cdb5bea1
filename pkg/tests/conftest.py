import numpy as np
import pytest

from faultloc.line_model import LineParameters
from faultloc.network_model import FaultPhaseMask, NetworkAdmittance


@pytest.fixture(scope="session")
def case_params():
    return LineParameters.case_study()


@pytest.fixture(scope="session")
def case_net(case_params):
    return NetworkAdmittance(case_params, 10e3, FaultPhaseMask((1, 0, 0)), 10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, n):
    """Random symmetric positive definite per-unit-length matrices."""
    def spd(scale, floor):
        A = rng.normal(size=(n, n))
        return scale * (A @ A.T / n + floor * np.eye(n))
    return LineParameters(R=spd(1e-4, 0.5), L=spd(3e-7, 0.5), G=spd(1e-9, 0.5), C=spd(1e-10, 0.5))


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    """Store one acceptance verdict; printed now and again in the terminal summary."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[(0, number)] = line
    print(line)
    return ok


def record_note(name, detail):
    line = f"note ({name}): {detail}"
    ACCEPTANCE[(1, name)] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
