import numpy as np
import pytest

from toposhield import benchmark_topology, random_topology

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def W6():
    return benchmark_topology()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def seeded_topologies(count, sizes=range(3, 9), densities=(0.5, 1.0), offset=0):
    """Deterministic (seed, W) pairs cycling through sizes and densities."""
    sizes = list(sizes)
    out = []
    for k in range(count):
        seed = offset + k
        n = sizes[k % len(sizes)]
        density = densities[(k // len(sizes)) % len(densities)]
        out.append((seed, random_topology(n, density, seed)))
    return out


@pytest.fixture(scope="session")
def acceptance_report():
    def record(criterion, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] criterion {criterion}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
