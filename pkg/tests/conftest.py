import numpy as np
import pytest

from netcohesion.graph import Graph

ACCEPTANCE_RESULTS = []


@pytest.fixture
def record_criterion():
    """Record a pass/fail line for the acceptance summary."""

    def record(number, name, passed, detail=""):
        ACCEPTANCE_RESULTS.append((number, name, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {name}  {detail}".rstrip())


def random_graph(rng, n, p_edge=0.3, connected=False):
    """Erdos-Renyi graph; optionally a random spanning path is added first."""
    edges = set()
    if connected:
        order = rng.permutation(n)
        edges |= {tuple(sorted((int(a), int(b)))) for a, b in zip(order[:-1], order[1:])}
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p_edge
    edges |= set(zip(iu[keep].tolist(), ju[keep].tolist()))
    return Graph(n, tuple(edges))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def path3():
    return Graph(3, ((0, 1), (1, 2)))
