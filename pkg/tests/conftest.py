import numpy as np
import pytest

from resmin import dp45, problems

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def dahlquist3_run():
    sys = problems.dahlquist(3.0)
    return sys, dp45.integrate(sys, 0.0, 1.0, [1.0], rtol=1e-8, atol=1e-8)


@pytest.fixture(scope="session")
def sho_run():
    sys = problems.sho()
    return sys, dp45.integrate(sys, 0.0, 30.0, [3.5, 0.0], rtol=1e-8, atol=1e-8)


@pytest.fixture(scope="session")
def vdp_run():
    sys = problems.van_der_pol()
    return sys, dp45.integrate(sys, 0.0, 2.0, [2.0, 0.0], rtol=1e-8, atol=1e-8)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
