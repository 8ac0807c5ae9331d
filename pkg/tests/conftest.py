import os

import numpy as np
import pytest

from alcm.data import VariableMeta, load_ground_truth
from alcm.graphs import CausalGraph, EdgeMark

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
GOLDEN = os.path.join(os.path.dirname(__file__), "golden")

ASIA_NODES = ["asia", "tub", "smoke", "lung", "bronc", "either", "xray", "dysp"]


@pytest.fixture(scope="session")
def asia_truth() -> CausalGraph:
    variables = [VariableMeta(n) for n in ASIA_NODES]
    return load_ground_truth(os.path.join(FIXTURES, "asia.edges"), variables)


@pytest.fixture(scope="session")
def asia_meta():
    return [VariableMeta(n) for n in ASIA_NODES]


@pytest.fixture
def chain3() -> CausalGraph:
    g = CausalGraph(["a", "b", "c"])
    return g.set_mark("a", "b", EdgeMark.DIRECTED).set_mark("b", "c", EdgeMark.DIRECTED)


@pytest.fixture
def collider3() -> CausalGraph:
    g = CausalGraph(["a", "b", "c"])
    return g.set_mark("a", "c", EdgeMark.DIRECTED).set_mark("b", "c", EdgeMark.DIRECTED)


def random_dag(rng: np.random.Generator, d: int, p: float) -> CausalGraph:
    """Random DAG over a random topological order (test helper)."""
    order = rng.permutation(d)
    g = CausalGraph([f"v{i}" for i in range(d)])
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                g = g.set_mark(int(order[a]), int(order[b]), EdgeMark.DIRECTED)
    return g


def random_mixed_graph(rng: np.random.Generator, d: int, p_edge: float = 0.4) -> CausalGraph:
    """Random mixed graph with directed and undirected marks (test helper)."""
    g = CausalGraph([f"v{i}" for i in range(d)])
    for i in range(d):
        for j in range(i + 1, d):
            r = rng.random()
            if r < p_edge * 0.5:
                if rng.random() < 0.5:
                    g = g.set_mark(i, j, EdgeMark.DIRECTED)
                else:
                    g = g.set_mark(j, i, EdgeMark.DIRECTED)
            elif r < p_edge:
                g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
    return g
