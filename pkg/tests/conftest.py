import numpy as np
import pytest
from hypothesis import settings

from hypelim import presets

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def ex1():
    return presets.example1_model(5)


@pytest.fixture
def ex2():
    return presets.example2_model(0)


@pytest.fixture
def star5():
    return presets.example1_graph(5)


@pytest.fixture
def fig1b():
    return presets.example2_graph()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_digraph(rng, n, p):
    from hypelim.graphs import DirectedGraph

    edges = [(i, j) for i in range(n) for j in range(n) if i != j and rng.random() < p]
    return DirectedGraph(n, edges)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
