import numpy as np
import pytest

from alcm.data import DISCRETE, Dataset, ScmSpec, VariableMeta, sample_scm
from alcm.errors import MixedPair, NotDiscrete, TooFewSamples
from alcm.graphs import CausalGraph, EdgeMark, cpdag_of_dag, is_acyclic
from alcm.pc import (
    AutoTester,
    DSeparationOracle,
    apply_meek_rules,
    d_separated,
    fisher_z_test,
    g_square_test,
    learn_skeleton,
    orient_v_structures,
    run_pc,
)
from conftest import random_dag


def _continuous(names, cols):
    return Dataset(tuple(VariableMeta(n) for n in names), np.column_stack(cols))


def _discrete(names, cols, card=2):
    return Dataset(
        tuple(VariableMeta(n, DISCRETE, card) for n in names), np.column_stack(cols)
    )


# --- fisher z ------------------------------------------------------------------

def test_fisher_z_independent_columns():
    rng = np.random.default_rng(123)
    ds = _continuous(["x", "y"], [rng.standard_normal(1000), rng.standard_normal(1000)])
    dec = fisher_z_test(ds, 0, 1, (), alpha=0.05)
    assert dec.independent and dec.p_value > 0.05


def test_fisher_z_duplicated_column_dependent():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(500)
    ds = _continuous(["x", "y"], [x, x.copy()])
    dec = fisher_z_test(ds, 0, 1, (), alpha=0.05)
    assert not dec.independent
    assert dec.p_value < 1e-12


def test_fisher_z_too_few_samples():
    ds = _continuous(["a", "b", "c", "d"], [np.arange(4.0)] * 4)
    with pytest.raises(TooFewSamples):
        fisher_z_test(ds, 0, 1, (2, 3), alpha=0.05)


def test_fisher_z_conditional_blocks_mediator():
    rng = np.random.default_rng(31)
    x = rng.standard_normal(4000)
    m = 1.5 * x + 0.5 * rng.standard_normal(4000)
    y = 1.5 * m + 0.5 * rng.standard_normal(4000)
    ds = _continuous(["x", "m", "y"], [x, m, y])
    assert not fisher_z_test(ds, 0, 2, (), alpha=0.05).independent
    assert fisher_z_test(ds, 0, 2, (1,), alpha=0.05).independent


def test_fisher_z_rejects_discrete_columns():
    ds = _discrete(["a", "b"], [np.array([0.0, 1.0]), np.array([1.0, 0.0])])
    with pytest.raises(MixedPair):
        fisher_z_test(ds, 0, 1, (), alpha=0.05)


# --- g square ------------------------------------------------------------------

def test_g_square_independent_coins():
    rng = np.random.default_rng(77)
    ds = _discrete(
        ["a", "b"],
        [rng.integers(0, 2, 10000).astype(float), rng.integers(0, 2, 10000).astype(float)],
    )
    dec = g_square_test(ds, 0, 1, (), alpha=0.05)
    assert dec.independent


def test_g_square_copied_column_dependent():
    rng = np.random.default_rng(78)
    a = rng.integers(0, 2, 1000).astype(float)
    ds = _discrete(["a", "b"], [a, a.copy()])
    dec = g_square_test(ds, 0, 1, (), alpha=0.05)
    assert not dec.independent
    assert dec.p_value < 1e-6


def test_g_square_rejects_continuous():
    ds = Dataset(
        (VariableMeta("a"), VariableMeta("b", DISCRETE, 2)),
        np.array([[0.5, 0.0], [1.5, 1.0]]),
    )
    with pytest.raises(NotDiscrete):
        g_square_test(ds, 0, 1, (), alpha=0.05)


def test_g_square_sparse_cells_declared_independent():
    rng = np.random.default_rng(79)
    a = rng.integers(0, 2, 30).astype(float)
    ds = _discrete(["a", "b", "c", "d"], [a, a.copy(), a.copy(), a.copy()])
    dec = g_square_test(ds, 0, 1, (2, 3), alpha=0.05)
    assert dec.independent and dec.p_value == 1.0


def test_g_square_conditional_dependence():
    # a and b marginally independent, dependent given their common effect
    rng = np.random.default_rng(80)
    a = rng.integers(0, 2, 20000)
    b = rng.integers(0, 2, 20000)
    c = (a ^ b).astype(float)
    ds = _discrete(["a", "b", "c"], [a.astype(float), b.astype(float), c])
    assert g_square_test(ds, 0, 1, (), alpha=0.05).independent
    assert not g_square_test(ds, 0, 1, (2,), alpha=0.05).independent


# --- d-separation oracle ---------------------------------------------------------

def test_d_separation_chain(chain3):
    assert not d_separated(chain3, 0, 2, ())
    assert d_separated(chain3, 0, 2, (1,))


def test_d_separation_collider(collider3):
    assert d_separated(collider3, 0, 1, ())
    assert not d_separated(collider3, 0, 1, (2,))


def test_d_separation_collider_descendant():
    g = CausalGraph(["a", "b", "c", "d"])
    g = g.set_mark("a", "c", EdgeMark.DIRECTED).set_mark("b", "c", EdgeMark.DIRECTED)
    g = g.set_mark("c", "d", EdgeMark.DIRECTED)
    assert d_separated(g, 0, 1, ())
    assert not d_separated(g, 0, 1, (3,))  # conditioning on a collider's descendant opens it


def _brute_force_d_separated(dag, x, y, Z):
    """Independent oracle: enumerate all simple trails and test blocking."""
    zset = set(Z)
    adj = {i: set(dag.adjacent(i)) for i in range(dag.d)}

    def descendants(node):
        out, stack = set(), [node]
        while stack:
            u = stack.pop()
            for c in dag.children(u):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def trail_active(trail):
        for k in range(1, len(trail) - 1):
            prev, node, nxt = trail[k - 1], trail[k], trail[k + 1]
            is_collider = dag.has_directed(prev, node) and dag.has_directed(nxt, node)
            if is_collider:
                if node not in zset and not (descendants(node) & zset):
                    return False
            elif node in zset:
                return False
        return True

    def any_active_trail(trail):
        node = trail[-1]
        if node == y:
            return trail_active(trail)
        for nxt in adj[node]:
            if nxt not in trail and any_active_trail(trail + [nxt]):
                return True
        return False

    return not any_active_trail([x])


def test_d_separation_matches_trail_enumeration():
    rng = np.random.default_rng(2718)
    for _ in range(40):
        d = int(rng.integers(3, 7))
        dag = random_dag(rng, d, 0.5)
        x, y = rng.choice(d, size=2, replace=False)
        others = [k for k in range(d) if k not in (x, y)]
        Z = tuple(k for k in others if rng.random() < 0.4)
        assert d_separated(dag, int(x), int(y), Z) == _brute_force_d_separated(
            dag, int(x), int(y), Z
        )


# --- skeleton ----------------------------------------------------------------------

def test_skeleton_on_chain_oracle(chain3):
    skeleton, sepsets = learn_skeleton(DSeparationOracle(chain3))
    assert set(skeleton.undirected_edges()) == {(0, 1), (1, 2)}
    assert sepsets[(0, 2)] == (1,)


def test_skeleton_on_collider_oracle(collider3):
    skeleton, sepsets = learn_skeleton(DSeparationOracle(collider3))
    assert set(skeleton.undirected_edges()) == {(0, 2), (1, 2)}
    assert sepsets[(0, 1)] == ()


def test_skeleton_two_independent_nodes():
    truth = CausalGraph(["a", "b"])
    skeleton, sepsets = learn_skeleton(DSeparationOracle(truth))
    assert skeleton.edge_count() == 0
    assert sepsets[(0, 1)] == ()


def test_skeleton_order_independent_with_oracle():
    rng = np.random.default_rng(14)
    dag = random_dag(rng, 6, 0.4)
    base_edges = {frozenset((dag.nodes[i], dag.nodes[j]))
                  for i, j in learn_skeleton(DSeparationOracle(dag))[0].undirected_edges()}
    for perm_seed in range(3):
        perm = np.random.default_rng(perm_seed).permutation(6)
        shuffled = CausalGraph([dag.nodes[k] for k in perm])
        for i, j in dag.directed_edges():
            shuffled = shuffled.set_mark(dag.nodes[i], dag.nodes[j], EdgeMark.DIRECTED)
        edges = {frozenset((shuffled.nodes[i], shuffled.nodes[j]))
                 for i, j in learn_skeleton(DSeparationOracle(shuffled))[0].undirected_edges()}
        assert edges == base_edges


# --- orientation ----------------------------------------------------------------------

def test_orient_v_structures_collider(collider3):
    skeleton, sepsets = learn_skeleton(DSeparationOracle(collider3))
    oriented = orient_v_structures(skeleton, sepsets)
    assert set(oriented.directed_edges()) == {(0, 2), (1, 2)}


def test_orient_v_structures_chain_left_alone(chain3):
    skeleton, sepsets = learn_skeleton(DSeparationOracle(chain3))
    oriented = orient_v_structures(skeleton, sepsets)
    assert oriented.directed_edges() == []


def test_orient_v_structures_triangle_unchanged():
    g = CausalGraph(["a", "b", "c"])
    for i, j in ((0, 1), (1, 2), (0, 2)):
        g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
    assert orient_v_structures(g, {}) == g


def test_meek_rule1():
    g = CausalGraph(["a", "b", "c"]).set_mark("a", "b", EdgeMark.DIRECTED)
    g = g.set_mark("b", "c", EdgeMark.UNDIRECTED)
    out = apply_meek_rules(g)
    assert out.has_directed("b", "c")


def test_meek_rule2():
    g = CausalGraph(["a", "b", "c"]).set_mark("a", "b", EdgeMark.DIRECTED)
    g = g.set_mark("b", "c", EdgeMark.DIRECTED).set_mark("a", "c", EdgeMark.UNDIRECTED)
    out = apply_meek_rules(g)
    assert out.has_directed("a", "c")


def test_meek_rule3():
    g = CausalGraph(["a", "b", "c", "d"])
    g = g.set_mark("a", "b", EdgeMark.UNDIRECTED)
    g = g.set_mark("a", "c", EdgeMark.UNDIRECTED).set_mark("a", "d", EdgeMark.UNDIRECTED)
    g = g.set_mark("c", "b", EdgeMark.DIRECTED).set_mark("d", "b", EdgeMark.DIRECTED)
    out = apply_meek_rules(g)
    assert out.has_directed("a", "b")


def test_meek_rule4():
    g = CausalGraph(["a", "b", "c", "d"])
    g = g.set_mark("a", "b", EdgeMark.UNDIRECTED)
    g = g.set_mark("a", "c", EdgeMark.UNDIRECTED).set_mark("a", "d", EdgeMark.UNDIRECTED)
    g = g.set_mark("c", "d", EdgeMark.DIRECTED).set_mark("d", "b", EdgeMark.DIRECTED)
    out = apply_meek_rules(g)
    assert out.has_directed("a", "b")


def test_meek_square_unchanged():
    g = CausalGraph(["a", "b", "c", "d"])
    for i, j in ((0, 1), (1, 2), (2, 3), (0, 3)):
        g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
    assert apply_meek_rules(g) == g


def test_meek_idempotent_and_skeleton_preserving():
    rng = np.random.default_rng(21)
    for _ in range(20):
        dag = random_dag(rng, 6, 0.4)
        skeleton, sepsets = learn_skeleton(DSeparationOracle(dag))
        oriented = orient_v_structures(skeleton, sepsets)
        once = apply_meek_rules(oriented)
        assert apply_meek_rules(once) == once
        skel = lambda g: {frozenset(e) for e in g.directed_edges()} | {
            frozenset(e) for e in g.undirected_edges()
        }
        assert skel(once) == skel(oriented)


# --- end to end -------------------------------------------------------------------

def test_run_pc_oracle_asia_equals_cpdag(asia_truth):
    got = run_pc(tester=DSeparationOracle(asia_truth))
    assert got == cpdag_of_dag(asia_truth)


def test_run_pc_collider_from_data():
    rng = np.random.default_rng(444)
    n = 5000
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    c = 1.2 * a - 0.9 * b + 0.5 * rng.standard_normal(n)
    ds = _continuous(["a", "b", "c"], [a, b, c])
    got = run_pc(ds, alpha=0.05)
    assert set(got.directed_edges()) == {(0, 2), (1, 2)}


def test_run_pc_single_variable():
    ds = _continuous(["only"], [np.arange(10.0)])
    got = run_pc(ds)
    assert got.d == 1 and got.edge_count() == 0


def test_run_pc_directed_part_acyclic_on_random_data():
    rng = np.random.default_rng(999)
    for seed in range(5):
        ds, _ = sample_scm(ScmSpec(d=6, edge_probability=0.4, seed=seed), 400)
        got = run_pc(ds)
        assert is_acyclic(got)


def test_auto_tester_rejects_mixed_pairs():
    ds = Dataset(
        (VariableMeta("a"), VariableMeta("b", DISCRETE, 2)),
        np.array([[0.5, 0.0], [1.5, 1.0], [2.5, 0.0]]),
    )
    with pytest.raises(MixedPair):
        AutoTester(ds).test(0, 1, ())


def test_decision_flag_matches_alpha():
    rng = np.random.default_rng(50)
    ds = _continuous(["x", "y"], [rng.standard_normal(200), rng.standard_normal(200)])
    for alpha in (0.01, 0.05, 0.5):
        dec = fisher_z_test(ds, 0, 1, (), alpha=alpha)
        assert dec.independent == (dec.p_value > alpha)
