import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sddete.data import table_from_arrays

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_table(X, y, partitions=3):
    return table_from_arrays(np.asarray(X, dtype=float), np.asarray(y), partitions)


@pytest.fixture
def small_imbalanced():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(130, 3))
    y = np.zeros(130, dtype=int)
    y[:30] = 1
    X[:30, 0] += 2.0
    return make_table(X, y, 4)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
