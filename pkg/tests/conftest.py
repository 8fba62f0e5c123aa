import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dsarl.channel import PropagationParams

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by the acceptance module, echoed in the terminal summary
CRITERIA: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def params():
    return PropagationParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
