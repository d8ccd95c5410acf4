import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "seeded", derandomize=True, deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("seeded")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def admissible_points(model, count, seed=0):
    from vsubmersion.harness import sample_points
    return sample_points(model, count, seed)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip(":abcd")), s)):
            terminalreporter.write_line(line)
