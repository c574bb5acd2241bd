import numpy as np
import pytest
from hypothesis import settings

from sctc.trellis import build_trellis

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rsc57():
    return build_trellis("1,5/7")


@pytest.fixture(scope="session")
def acc():
    """Two-state accumulator: parity w_k = u_k + w_{k-1}."""
    return build_trellis("1,1/3")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
