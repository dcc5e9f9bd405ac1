import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dcrl.graphs import LatentDag, is_acyclic

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance verdict lines, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def all_dags(k):
    """Every DAG on k labelled nodes (each pair absent, forward or backward)."""
    pairs = list(itertools.combinations(range(k), 2))
    out = []
    for states in itertools.product(range(3), repeat=len(pairs)):
        edges = []
        for (a, b), s in zip(pairs, states):
            if s == 1:
                edges.append((a, b))
            elif s == 2:
                edges.append((b, a))
        if is_acyclic(edges, k):
            out.append(LatentDag(k, frozenset(edges)))
    return out


@pytest.fixture(scope="session")
def dags3():
    return all_dags(3)


@pytest.fixture(scope="session")
def dags4():
    return all_dags(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
