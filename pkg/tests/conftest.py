import numpy as np
import pytest

from tokenbind.numerics import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_spd(rng, n, cond):
    """SPD matrix with prescribed condition number."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    eig = np.geomspace(1.0, cond, n)
    return (q * eig) @ q.T


# one "PASS/FAIL" line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
