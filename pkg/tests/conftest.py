import numpy as np
import pytest

from waveplate import Domain, SourceSpec, assemble


@pytest.fixture(scope="session")
def ops2():
    """8 wave + 8 plate modes in the square chamber."""
    return assemble(Domain(2), 8, 8)


@pytest.fixture(scope="session")
def ops_small():
    return assemble(Domain(2), 4, 4)


@pytest.fixture(scope="session")
def linear_spec():
    return SourceSpec(p=1.0, rho_w=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
