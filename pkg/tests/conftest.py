import numpy as np
import pytest

from sparsegen.core import make_rng

# outcome lines collected by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def rng():
    return make_rng(1234, "tests")


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
