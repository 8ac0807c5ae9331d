import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alcm.errors import EmptyCorpus, NodeSetMismatch, NonFiniteInput
from alcm.graphs import CausalGraph, EdgeMark, is_acyclic
from alcm.hybrid import (
    METHODS,
    MethodOutput,
    WeightNet,
    WeightVector,
    build_features,
    combine,
    edge_scores,
    generate_corpus,
    net_forward,
    normalize_weights,
    train_net,
    union_graph,
)
from alcm.metrics import EvaluationReport
from alcm.refiner import ScriptedMock
from conftest import random_mixed_graph

_DUMMY_REPORT = EvaluationReport(0, 0, 0, 0, 0, 0)


def _mo(method, g):
    return MethodOutput(method, g, _DUMMY_REPORT)


def _outputs(graphs):
    return [_mo(m, g) for m, g in zip(METHODS, graphs)]


# --- weights ---------------------------------------------------------------------

def test_normalize_weights_proportional():
    w = normalize_weights([0.07, 0.02, 0.01])
    assert w.as_array() == pytest.approx([0.7, 0.2, 0.1])


def test_normalize_weights_clamps_negatives():
    w = normalize_weights([0.0714, -0.63, -0.59])
    assert w.w_pc == pytest.approx(0.99997, abs=1e-4)
    assert w.w_lingam == pytest.approx(1.4e-5, abs=1e-5)
    assert w.w_notears == pytest.approx(1.4e-5, abs=1e-5)


def test_normalize_weights_equal_composites():
    w = normalize_weights([0.4, 0.4, 0.4])
    assert w.as_array() == pytest.approx([1 / 3] * 3)


@given(st.floats(0.01, 100.0), st.integers(0, 2**31 - 1))
@settings(max_examples=40)
def test_normalize_weights_scale_invariant_for_positive_inputs(scale, seed):
    rng = np.random.default_rng(seed)
    composites = rng.uniform(0.05, 1.0, size=3)
    a = normalize_weights(composites).as_array()
    b = normalize_weights(composites * scale).as_array()
    assert a == pytest.approx(b, abs=1e-9)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_normalize_weights_sum_to_one_including_negatives(seed):
    rng = np.random.default_rng(seed)
    composites = rng.uniform(-1.0, 1.0, size=3)
    assert normalize_weights(composites).as_array().sum() == pytest.approx(1.0, abs=1e-9)


# --- weight net -------------------------------------------------------------------

def test_zero_net_outputs_uniform():
    net = WeightNet()
    out = net_forward(net, np.zeros(9))
    assert out.as_array() == pytest.approx([1 / 3] * 3)
    out2 = net_forward(net, np.linspace(-2, 2, 9))
    assert out2.as_array() == pytest.approx([1 / 3] * 3)


def test_net_forward_sums_to_one_on_random_inputs():
    net = WeightNet.random_init(5)
    rng = np.random.default_rng(6)
    for _ in range(200):
        out = net_forward(net, rng.normal(size=9) * 10)
        assert out.as_array().sum() == pytest.approx(1.0, abs=1e-9)


def test_net_forward_rejects_nan():
    net = WeightNet()
    bad = np.zeros(9)
    bad[4] = np.nan
    with pytest.raises(NonFiniteInput):
        net_forward(net, bad)
    with pytest.raises(NonFiniteInput):
        net_forward(net, np.zeros(5))


def test_train_net_memorizes_single_sample():
    rng = np.random.default_rng(9)
    f = rng.normal(size=9)
    t = np.array([0.6, 0.3, 0.1])
    net, mse = train_net([(f, t)] * 4, epochs=600, seed=1)
    out = net_forward(net, f).as_array()
    assert np.max(np.abs(out - t)) < 1e-2
    assert mse < 1e-4


def test_train_net_empty_corpus():
    with pytest.raises(EmptyCorpus):
        train_net([])


def test_weight_net_save_load_round_trip(tmp_path):
    net = WeightNet.random_init(3)
    path = str(tmp_path / "net.json")
    net.save(path)
    again = WeightNet.load(path)
    x = np.linspace(-1, 1, 9)
    assert net_forward(net, x).as_array() == pytest.approx(net_forward(again, x).as_array())


def test_generate_corpus_shapes_and_determinism():
    corpus1 = generate_corpus(3, seed=5)
    corpus2 = generate_corpus(3, seed=5)
    assert len(corpus1) == 3
    for (f1, t1), (f2, t2) in zip(corpus1, corpus2):
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_array_equal(t1, t2)
        assert t1.sum() == pytest.approx(1.0, abs=1e-9)
        assert f1[3] + f1[6] == pytest.approx(1.0, abs=1e-12)  # density + sparsity


# --- union graph and features ---------------------------------------------------

def test_union_graph_rules():
    nodes = ["a", "b", "c"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g2 = CausalGraph(nodes).set_mark("b", "a", EdgeMark.DIRECTED)
    g3 = CausalGraph(nodes).set_mark("b", "c", EdgeMark.DIRECTED)
    u = union_graph([g1, g2, g3])
    assert u.has_undirected("a", "b")  # conflicting orientations
    assert u.has_directed("b", "c")  # unanimous orientation


def test_union_graph_node_mismatch():
    with pytest.raises(NodeSetMismatch):
        union_graph([CausalGraph(["a"]), CausalGraph(["b"])])


def test_build_features_layout(asia_truth):
    outputs = [_mo(m, asia_truth) for m in METHODS]
    outputs = [
        MethodOutput(m, asia_truth, EvaluationReport(1, 1, 1, 1, 0, 0.5 + i * 0.1))
        for i, m in enumerate(METHODS)
    ]
    f = build_features(outputs, 1000)
    assert f.shape == (9,)
    assert f[:3] == pytest.approx([0.5, 0.6, 0.7])


# --- edge scores and combination --------------------------------------------------

def test_edge_scores_weighted_sum():
    nodes = ["a", "b"]
    g_pc = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g_li = CausalGraph(nodes)
    g_no = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    scores = edge_scores(_outputs([g_pc, g_li, g_no]), WeightVector(0.5, 0.3, 0.2))
    assert scores[(0, 1)] == pytest.approx(0.7)
    assert (1, 0) not in scores


def test_edge_scores_undirected_votes_both_ways():
    nodes = ["a", "b"]
    g_pc = CausalGraph(nodes).set_mark("a", "b", EdgeMark.UNDIRECTED)
    scores = edge_scores(
        _outputs([g_pc, CausalGraph(nodes), CausalGraph(nodes)]),
        WeightVector(0.5, 0.3, 0.2),
    )
    assert scores[(0, 1)] == pytest.approx(0.5)
    assert scores[(1, 0)] == pytest.approx(0.5)


def test_combine_majority_retains_two_of_three():
    nodes = ["a", "b", "c"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g2 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g3 = CausalGraph(nodes)
    out = combine(_outputs([g1, g2, g3]), WeightVector(1 / 3, 1 / 3, 1 / 3), tau=0.5)
    assert out.directed_edges() == [(0, 1)]


def test_combine_opposite_orientations_tie_to_undirected():
    nodes = ["a", "b"]
    und = CausalGraph(nodes).set_mark("a", "b", EdgeMark.UNDIRECTED)
    fwd = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    rev = CausalGraph(nodes).set_mark("b", "a", EdgeMark.DIRECTED)
    out = combine(_outputs([und, fwd, rev]), WeightVector(1 / 3, 1 / 3, 1 / 3), tau=0.5)
    assert out.has_undirected("a", "b")


def test_combine_higher_scored_direction_wins():
    nodes = ["a", "b"]
    und = CausalGraph(nodes).set_mark("a", "b", EdgeMark.UNDIRECTED)
    fwd = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    rev = CausalGraph(nodes).set_mark("b", "a", EdgeMark.DIRECTED)
    out = combine(_outputs([und, fwd, rev]), WeightVector(0.2, 0.5, 0.3), tau=0.4)
    # forward: 0.2 + 0.5 = 0.7; reverse: 0.2 + 0.3 = 0.5
    assert out.has_directed("a", "b")


def test_combine_unique_edge_arbitration_keep():
    nodes = ["a", "b", "c"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g1 = g1.set_mark("b", "c", EdgeMark.DIRECTED)  # unique to pc, below tau
    g2 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    g3 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    llm = ScriptedMock(
        [json.dumps({"decision": "keep", "confidence": "very_high", "reason": "plausible"})]
    )
    out = combine(_outputs([g1, g2, g3]), WeightVector(1 / 3, 1 / 3, 1 / 3), tau=0.5, llm=llm)
    assert out.has_directed("b", "c")
    assert llm.calls == 1


def test_combine_unique_edge_arbitration_remove_and_low_confidence():
    nodes = ["a", "b"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    outputs = _outputs([g1, CausalGraph(nodes), CausalGraph(nodes)])
    w = WeightVector(1 / 3, 1 / 3, 1 / 3)
    for verdict in (
        {"decision": "remove", "confidence": "very_high", "reason": ""},
        {"decision": "keep", "confidence": "moderate", "reason": ""},
    ):
        out = combine(outputs, w, tau=0.5, llm=ScriptedMock([json.dumps(verdict)]))
        assert out.edge_count() == 0


def test_combine_no_arbitration_without_client():
    nodes = ["a", "b"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    out = combine(_outputs([g1, CausalGraph(nodes), CausalGraph(nodes)]),
                  WeightVector(1 / 3, 1 / 3, 1 / 3), tau=0.5)
    assert out.edge_count() == 0


def test_combine_survives_client_failure(caplog):
    from alcm.errors import RateLimited

    class FailingClient:
        def complete(self, prompt, temperature=0.0, max_tokens=512):
            raise RateLimited("nope")

    nodes = ["a", "b"]
    g1 = CausalGraph(nodes).set_mark("a", "b", EdgeMark.DIRECTED)
    with caplog.at_level(logging.WARNING):
        out = combine(_outputs([g1, CausalGraph(nodes), CausalGraph(nodes)]),
                      WeightVector(1 / 3, 1 / 3, 1 / 3), tau=0.5, llm=FailingClient())
    assert out.edge_count() == 0
    assert any("arbitration skipped" in r.message for r in caplog.records)


def test_combine_output_always_acyclic():
    rng = np.random.default_rng(33)
    w = WeightVector(1 / 3, 1 / 3, 1 / 3)
    for _ in range(50):
        graphs = [random_mixed_graph(rng, 5, 0.6) for _ in range(3)]
        nodes = graphs[0].nodes
        graphs = [CausalGraph(nodes, g.marks_matrix()) for g in graphs]
        out = combine(_outputs(graphs), w, tau=0.5)
        assert is_acyclic(out)


def _brute_force_majority(graphs):
    """Independent vote-count reimplementation of the equal-weight rules."""
    nodes = graphs[0].nodes
    d = len(nodes)

    def votes(i, j):
        count = 0
        for g in graphs:
            if g.has_directed(i, j) or g.has_undirected(i, j):
                count += 1
        return count

    g = CausalGraph(nodes)
    for i in range(d):
        for j in range(i + 1, d):
            fwd, rev = votes(i, j), votes(j, i)
            if fwd >= 2 and rev >= 2:
                if fwd > rev:
                    g = g.set_mark(i, j, EdgeMark.DIRECTED)
                elif rev > fwd:
                    g = g.set_mark(j, i, EdgeMark.DIRECTED)
                else:
                    g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
            elif fwd >= 2:
                g = g.set_mark(i, j, EdgeMark.DIRECTED)
            elif rev >= 2:
                g = g.set_mark(j, i, EdgeMark.DIRECTED)
    # identical cycle repair, driven by vote counts
    from alcm.graphs import find_directed_cycle

    while not is_acyclic(g):
        cycle = find_directed_cycle(g)
        weakest = min(cycle, key=lambda e: (votes(*e) / 3.0, e))
        g = g.set_mark(weakest[0], weakest[1], EdgeMark.ABSENT)
    return g


def test_combine_equals_brute_force_majority():
    rng = np.random.default_rng(101)
    w = WeightVector(1 / 3, 1 / 3, 1 / 3)
    for _ in range(100):
        d = int(rng.integers(2, 6))
        base = [random_mixed_graph(rng, d, 0.5) for _ in range(3)]
        nodes = base[0].nodes
        graphs = [CausalGraph(nodes, g.marks_matrix()) for g in base]
        got = combine(_outputs(graphs), w, tau=0.5)
        want = _brute_force_majority(graphs)
        assert got == want
