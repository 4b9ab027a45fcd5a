import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BENCHMARK = [(0.6, 0.4), (0.55, 0.45), (0.5, 0.5), (0.4, 0.6)]


@pytest.fixture
def benchmark_hyps():
    return list(BENCHMARK)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for the test's acceptance marker, then assert it."""
    number, title = request.node.get_closest_marker("acceptance").args

    def record(ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    yield record
    if number not in ACCEPTANCE:
        ACCEPTANCE[number] = f"[FAIL] criterion {number:>2}: {title} (raised before reporting)"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
