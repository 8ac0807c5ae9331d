import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alcm.errors import MalformedDocument, NotADag, SelfLoop, UnknownNode
from alcm.graphs import (
    ABSENT,
    DIRECTED,
    UNDIRECTED,
    CausalGraph,
    EdgeMark,
    cpdag_of_dag,
    find_directed_cycle,
    from_json,
    graph_features,
    is_acyclic,
    summarize_edges,
    to_dot,
    to_json,
    topological_order,
    would_create_cycle,
)
from conftest import random_dag, random_mixed_graph


def test_set_mark_directed_clears_reverse():
    g = CausalGraph(["a", "b"]).set_mark("a", "b", EdgeMark.DIRECTED)
    assert g.mark("a", "b") is EdgeMark.DIRECTED
    assert g.mark("b", "a") is EdgeMark.ABSENT
    flipped = g.set_mark("b", "a", EdgeMark.DIRECTED)
    assert flipped.mark("a", "b") is EdgeMark.ABSENT
    assert flipped.mark("b", "a") is EdgeMark.DIRECTED


def test_set_mark_undirected_sets_both():
    g = CausalGraph(["a", "b"]).set_mark("a", "b", EdgeMark.UNDIRECTED)
    assert g.mark("a", "b") is EdgeMark.UNDIRECTED
    assert g.mark("b", "a") is EdgeMark.UNDIRECTED


def test_set_mark_self_loop_rejected():
    g = CausalGraph(["a", "b"])
    with pytest.raises(SelfLoop):
        g.set_mark("a", "a", EdgeMark.DIRECTED)


def test_set_mark_unknown_node():
    g = CausalGraph(["a", "b"])
    with pytest.raises(UnknownNode):
        g.set_mark("a", "zzz", EdgeMark.DIRECTED)


def test_graphs_are_immutable_values():
    g = CausalGraph(["a", "b"])
    h = g.set_mark("a", "b", EdgeMark.DIRECTED)
    assert g.mark("a", "b") is EdgeMark.ABSENT
    assert g != h
    with pytest.raises(AttributeError):
        g.nodes = ("x",)
    with pytest.raises(ValueError):
        g.marks_matrix()[0, 1] = 1


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.sampled_from(list(EdgeMark))), max_size=40))
def test_mark_invariants_hold_under_random_mutations(ops):
    g = CausalGraph([f"n{i}" for i in range(5)])
    for i, j, mark in ops:
        if i == j:
            continue
        g = g.set_mark(i, j, mark)
    m = g.marks_matrix()
    assert np.all(np.diag(m) == ABSENT)
    und = m == UNDIRECTED
    assert np.array_equal(und, und.T)
    assert not np.any((m == DIRECTED) & (m.T == DIRECTED))


def _brute_force_has_cycle(g: CausalGraph) -> bool:
    edges = g.directed_edges()
    for length in range(1, g.d + 1):
        for nodes in itertools.permutations(range(g.d), length):
            if all((nodes[k], nodes[(k + 1) % length]) in edges for k in range(length)):
                return True
    return False


def test_is_acyclic_trivial_cases(chain3):
    assert is_acyclic(chain3)
    g = CausalGraph(["a", "b"]).set_mark("a", "b", EdgeMark.DIRECTED)
    assert is_acyclic(g)
    # a 2-cycle is unrepresentable (directed marks clear their reverse), so
    # the smallest buildable cycle has three edges
    three_cycle = CausalGraph(
        ["a", "b", "c"], np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=np.int8)
    )
    assert not is_acyclic(three_cycle)


def test_two_cycle_is_unrepresentable():
    with pytest.raises(ValueError):
        CausalGraph(["a", "b"], np.array([[0, 1], [1, 0]], dtype=np.int8))


def test_is_acyclic_matches_brute_force():
    rng = np.random.default_rng(5)
    for _ in range(60):
        d = int(rng.integers(2, 7))
        marks = np.zeros((d, d), dtype=np.int8)
        for i in range(d):
            for j in range(d):
                if i != j and rng.random() < 0.3 and marks[j, i] == 0:
                    marks[i, j] = 1
        g = CausalGraph([f"n{i}" for i in range(d)], marks)
        assert is_acyclic(g) == (not _brute_force_has_cycle(g))


def test_sampled_scm_dags_are_acyclic():
    from alcm.data import ScmSpec, sample_scm

    for seed in range(20):
        _, truth = sample_scm(ScmSpec(d=50, edge_probability=0.1, seed=seed), 1)
        assert is_acyclic(truth)
        topological_order(truth)  # must not raise


def test_find_directed_cycle_returns_edges():
    marks = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]], dtype=np.int8)
    g = CausalGraph(["a", "b", "c"], marks)
    cycle = find_directed_cycle(g)
    assert cycle is not None
    for i, j in cycle:
        assert g.has_directed(i, j)
    assert find_directed_cycle(CausalGraph(["a", "b"])) is None


def test_would_create_cycle():
    g = CausalGraph(["a", "b", "c"]).set_mark("a", "b", EdgeMark.DIRECTED)
    g = g.set_mark("b", "c", EdgeMark.DIRECTED)
    assert would_create_cycle(g, "c", "a")
    assert not would_create_cycle(g, "a", "c")
    # reversing a -> b is fine here: no other a ~> b path
    assert not would_create_cycle(g, "b", "a")


def test_graph_features_empty_and_complete():
    empty = CausalGraph(["a", "b", "c", "d"])
    f = graph_features(empty, 10)
    assert f.density == 0 and f.sparsity == 1

    complete = CausalGraph(["a", "b", "c", "d"])
    for i in range(4):
        for j in range(i + 1, 4):
            complete = complete.set_mark(i, j, EdgeMark.UNDIRECTED)
    f = graph_features(complete, 10)
    assert f.density == 1 and f.mean_degree_norm == 1


def test_graph_features_chain_hand_computed(chain3):
    f = graph_features(chain3, 1000)
    assert f.density == pytest.approx(2 / 3)
    assert f.mean_degree_norm == pytest.approx(2 / 3)
    assert f.degree_std_norm == pytest.approx(np.std([1, 2, 1]) / 2)
    assert f.sample_count_norm == pytest.approx(0.5)
    assert f.sparsity == pytest.approx(1 - f.density, abs=1e-12)


def test_cpdag_of_chain_is_fully_undirected(chain3):
    cp = cpdag_of_dag(chain3)
    assert cp.undirected_edges() == [(0, 1), (1, 2)]
    assert cp.directed_edges() == []


def test_cpdag_of_collider_keeps_orientations(collider3):
    cp = cpdag_of_dag(collider3)
    assert set(cp.directed_edges()) == {(0, 2), (1, 2)}
    assert cp.undirected_edges() == []


def test_cpdag_of_single_edge_is_undirected():
    g = CausalGraph(["a", "b"]).set_mark("a", "b", EdgeMark.DIRECTED)
    cp = cpdag_of_dag(g)
    assert cp.undirected_edges() == [(0, 1)]


def test_cpdag_requires_dag():
    g = CausalGraph(["a", "b"]).set_mark("a", "b", EdgeMark.UNDIRECTED)
    with pytest.raises(NotADag):
        cpdag_of_dag(g)


def test_cpdag_preserves_skeleton_and_orientations():
    rng = np.random.default_rng(11)
    for _ in range(30):
        dag = random_dag(rng, int(rng.integers(2, 8)), 0.4)
        cp = cpdag_of_dag(dag)
        dag_skel = {frozenset(e) for e in dag.directed_edges()}
        cp_skel = {frozenset(e) for e in cp.directed_edges()}
        cp_skel |= {frozenset(e) for e in cp.undirected_edges()}
        assert dag_skel == cp_skel
        for i, j in cp.directed_edges():
            assert dag.has_directed(i, j)


def test_json_round_trip(asia_truth):
    assert from_json(to_json(asia_truth)) == asia_truth


def test_json_round_trip_mixed_graph():
    rng = np.random.default_rng(3)
    g = random_mixed_graph(rng, 6)
    assert from_json(to_json(g)) == g


def test_dot_renders_marks():
    g = CausalGraph(["a", "b", "c"]).set_mark("a", "b", EdgeMark.DIRECTED)
    g = g.set_mark("a", "c", EdgeMark.UNDIRECTED)
    dot = to_dot(g)
    assert '"a" -> "b";' in dot
    assert "a -- c" in dot


@pytest.mark.parametrize(
    "doc",
    [
        "{",
        "[]",
        '{"nodes": ["a"]}',
        '{"nodes": ["a", "a"], "edges": []}',
        '{"nodes": ["a", "b"], "edges": [{"from": "a"}]}',
        '{"nodes": ["a", "b"], "edges": [{"from": "a", "to": "b", "mark": "wobbly"}]}',
        '{"nodes": ["a", "b"], "edges": [{"from": "a", "to": "zzz", "mark": "directed"}]}',
    ],
)
def test_from_json_rejects_malformed(doc):
    with pytest.raises(MalformedDocument):
        from_json(doc)


def test_summarize_edges():
    g = CausalGraph(["a", "b", "c"]).set_mark("a", "b", EdgeMark.DIRECTED)
    g = g.set_mark("b", "c", EdgeMark.UNDIRECTED)
    assert summarize_edges(g) == "a -> b; b -- c"
    assert summarize_edges(CausalGraph(["a"])) == "no edges yet"
