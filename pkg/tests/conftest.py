import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mrproj.scaling import build_basis

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def bases():
    """Scaling bases r = 1..10, built once."""
    return {r: build_basis(r) for r in range(1, 11)}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:s.index("]")])):
            terminalreporter.write_line(line)
