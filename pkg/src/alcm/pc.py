"""Peter-Clark structure learning: CI tests, skeleton, v-structures, Meek rules.

Testers are constructed with their data and significance level so that a
decision's ``independent`` flag always means ``p_value > alpha`` for that
tester. A d-separation oracle over a known DAG doubles as a perfect tester
in tests and in CLI runs with a ground-truth file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .data import Dataset
from .errors import (
    MixedPair,
    NotDiscrete,
    SingularCorrelation,
    TooFewSamples,
)
from .graphs import CausalGraph, EdgeMark

log = logging.getLogger(__name__)

SepsetTable = dict  # (i, j) with i < j -> tuple of separating node indices


@dataclass(frozen=True)
class CiDecision:
    independent: bool
    p_value: float
    statistic: float


# --- conditional independence tests ----------------------------------------

_R_CLAMP = 1.0 - 1e-7


def fisher_z_test(ds: Dataset, i: int, j: int, S: Sequence[int], alpha: float) -> CiDecision:
    """Partial-correlation z test for continuous columns.

    Partial correlation of i, j given S comes from inverting the correlation
    matrix of the involved columns; the z statistic is
    sqrt(n - |S| - 3) * |arctanh(r)| with a two-sided normal tail.
    """
    cols = [i, j, *S]
    for k in cols:
        if ds.variables[k].is_discrete:
            raise MixedPair(f"column {ds.variables[k].name!r} is discrete")
    n = ds.n
    if n <= len(S) + 3:
        raise TooFewSamples(f"need n > |S| + 3, got n={n}, |S|={len(S)}")
    sub = ds.rows[:, cols]
    corr = np.corrcoef(sub, rowvar=False)
    if np.any(~np.isfinite(corr)):
        raise SingularCorrelation("constant column in conditioning problem")
    if len(S) == 0:
        r = corr[0, 1]
    else:
        try:
            prec = np.linalg.inv(corr)
        except np.linalg.LinAlgError as exc:
            raise SingularCorrelation(str(exc)) from exc
        denom = prec[0, 0] * prec[1, 1]
        if denom <= 0 or not np.isfinite(denom):
            raise SingularCorrelation("non-positive precision diagonal")
        r = -prec[0, 1] / np.sqrt(denom)
    r = float(np.clip(r, -_R_CLAMP, _R_CLAMP))
    z = 0.5 * np.log((1 + r) / (1 - r))
    statistic = float(np.sqrt(n - len(S) - 3) * abs(z))
    p = float(2 * stats.norm.sf(statistic))
    return CiDecision(independent=p > alpha, p_value=p, statistic=statistic)


MIN_AVG_CELL_COUNT = 5.0


def g_square_test(ds: Dataset, i: int, j: int, S: Sequence[int], alpha: float) -> CiDecision:
    """Likelihood-ratio G^2 test over stratified contingency tables.

    Degrees of freedom are (r_i - 1)(r_j - 1) * prod of conditioning
    cardinalities. When the average cell count drops below
    MIN_AVG_CELL_COUNT the test refuses to reject and returns independent.
    """
    for k in (i, j, *S):
        if not ds.variables[k].is_discrete:
            raise NotDiscrete(f"column {ds.variables[k].name!r} is not discrete")
    ri = ds.variables[i].cardinality
    rj = ds.variables[j].cardinality
    rS = int(np.prod([ds.variables[k].cardinality for k in S], dtype=float)) if S else 1
    n = ds.n
    if n / (ri * rj * rS) < MIN_AVG_CELL_COUNT:
        return CiDecision(independent=True, p_value=1.0, statistic=0.0)

    xi = ds.rows[:, i].astype(int)
    xj = ds.rows[:, j].astype(int)
    if S:
        # stratum key: mixed-radix encoding of the conditioning columns
        key = np.zeros(n, dtype=np.int64)
        for k in S:
            key = key * ds.variables[k].cardinality + ds.rows[:, k].astype(int)
    else:
        key = np.zeros(n, dtype=np.int64)

    g2 = 0.0
    for stratum in np.unique(key):
        sel = key == stratum
        table = np.zeros((ri, rj))
        np.add.at(table, (xi[sel], xj[sel]), 1.0)
        total = table.sum()
        if total == 0:
            continue
        rows = table.sum(axis=1, keepdims=True)
        cols = table.sum(axis=0, keepdims=True)
        expected = rows @ cols / total
        mask = table > 0
        g2 += 2.0 * float(np.sum(table[mask] * np.log(table[mask] / expected[mask])))
    dof = (ri - 1) * (rj - 1) * rS
    p = float(stats.chi2.sf(g2, dof)) if dof > 0 else 1.0
    return CiDecision(independent=p > alpha, p_value=p, statistic=g2)


# --- tester objects ----------------------------------------------------------

class FisherZTester:
    def __init__(self, ds: Dataset, alpha: float = 0.05):
        self.ds = ds
        self.alpha = alpha
        self.names = ds.names

    def test(self, i: int, j: int, S: Sequence[int]) -> CiDecision:
        return fisher_z_test(self.ds, i, j, S, self.alpha)


class GSquareTester:
    def __init__(self, ds: Dataset, alpha: float = 0.05):
        self.ds = ds
        self.alpha = alpha
        self.names = ds.names

    def test(self, i: int, j: int, S: Sequence[int]) -> CiDecision:
        return g_square_test(self.ds, i, j, S, self.alpha)


class AutoTester:
    """Routes each test by column kinds; mixed pairs are rejected."""

    def __init__(self, ds: Dataset, alpha: float = 0.05):
        self.ds = ds
        self.alpha = alpha
        self.names = ds.names

    def test(self, i: int, j: int, S: Sequence[int]) -> CiDecision:
        kinds = {self.ds.variables[k].is_discrete for k in (i, j, *S)}
        if kinds == {True}:
            return g_square_test(self.ds, i, j, S, self.alpha)
        if kinds == {False}:
            return fisher_z_test(self.ds, i, j, S, self.alpha)
        raise MixedPair(
            f"test of {self.names[i]!r} vs {self.names[j]!r} mixes discrete and continuous columns"
        )


class DSeparationOracle:
    """Perfect CI tester backed by d-separation on a known DAG (test double)."""

    def __init__(self, truth: CausalGraph):
        self.truth = truth
        self.names = truth.nodes

    def test(self, i: int, j: int, S: Sequence[int]) -> CiDecision:
        sep = d_separated(self.truth, i, j, S)
        return CiDecision(independent=sep, p_value=1.0 if sep else 0.0,
                          statistic=0.0 if sep else float("inf"))


def d_separated(dag: CausalGraph, x: int, y: int, Z: Sequence[int]) -> bool:
    """Is x d-separated from y given Z in a fully directed DAG?

    Reachability over active trails: a state is a (node, direction) pair
    where "up" means the node was entered from a child.
    """
    zset = set(Z)
    # ancestors of Z (including Z): colliders with observed descendants stay open
    anc = set(zset)
    stack = list(zset)
    while stack:
        u = stack.pop()
        for p in dag.parents(u):
            if p not in anc:
                anc.add(p)
                stack.append(p)

    visited: set[tuple[int, str]] = set()
    frontier: list[tuple[int, str]] = [(x, "up")]
    while frontier:
        node, direction = frontier.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node == y and node not in zset:
            return False
        if direction == "up" and node not in zset:
            for p in dag.parents(node):
                frontier.append((p, "up"))
            for c in dag.children(node):
                frontier.append((c, "down"))
        elif direction == "down":
            if node not in zset:
                for c in dag.children(node):
                    frontier.append((c, "down"))
            if node in anc:
                for p in dag.parents(node):
                    frontier.append((p, "up"))
    return True


# --- skeleton discovery ------------------------------------------------------

def learn_skeleton(
    tester, max_cond: Optional[int] = None
) -> tuple[CausalGraph, SepsetTable]:
    """Edge-removal phase: start complete, remove separable pairs level by level.

    At level l, each surviving edge (i, j) is tested against all size-l
    subsets of adj(i) \\ {j} and then adj(j) \\ {i}, in lexicographic order;
    the first separating set is recorded.
    """
    names = tester.names
    d = len(names)
    complete = np.full((d, d), 2, dtype=np.int8)
    np.fill_diagonal(complete, 0)
    g = CausalGraph(names, complete)
    sepsets: SepsetTable = {}
    if max_cond is None:
        max_cond = max(d - 2, 0)

    level = 0
    while level <= max_cond:
        any_candidates = False
        for i in range(d):
            for j in range(i + 1, d):
                if not g.is_adjacent(i, j):
                    continue
                removed = False
                for anchor, other in ((i, j), (j, i)):
                    neighbours = [k for k in g.adjacent(anchor) if k != other]
                    if len(neighbours) >= level:
                        any_candidates = True
                    for S in combinations(neighbours, level):
                        decision = tester.test(i, j, S)
                        if decision.independent:
                            g = g.set_mark(i, j, EdgeMark.ABSENT)
                            sepsets[(i, j)] = tuple(S)
                            removed = True
                            break
                    if removed:
                        break
        if not any_candidates:
            break
        level += 1
    return g, sepsets


def orient_v_structures(skeleton: CausalGraph, sepsets: SepsetTable) -> CausalGraph:
    """Direct every unshielded triple i - k - j with k outside sepset(i, j).

    Conflicting triples are resolved last-writer-wins in canonical triple
    order; conflicts are counted and logged.
    """
    g = skeleton
    conflicts = 0
    d = g.d
    for i in range(d):
        for j in range(i + 1, d):
            if g.is_adjacent(i, j):
                continue
            key = (i, j)
            if key not in sepsets:
                continue
            sep = set(sepsets[key])
            for k in range(d):
                if k == i or k == j or k in sep:
                    continue
                if not (skeleton.is_adjacent(i, k) and skeleton.is_adjacent(j, k)):
                    continue
                if g.has_directed(k, i) or g.has_directed(k, j):
                    conflicts += 1
                g = g.set_mark(i, k, EdgeMark.DIRECTED)
                g = g.set_mark(j, k, EdgeMark.DIRECTED)
    if conflicts:
        log.warning("v-structure orientation hit %d conflicts (last writer wins)", conflicts)
    return g


def apply_meek_rules(g: CausalGraph) -> CausalGraph:
    """Close orientations under the four Meek rules.

    R1: a -> b - c with a, c nonadjacent        => b -> c
    R2: a -> c -> b with a - b                  => a -> b
    R3: a - b, a - c -> b, a - d -> b, c,d n.a. => a -> b
    R4: a - b, a ~ c, a ~ d, c -> d -> b, c,b n.a. => a -> b
    """
    changed = True
    while changed:
        changed = False
        for a in range(g.d):
            for b in range(g.d):
                if not g.has_undirected(a, b) or a == b:
                    continue
                if _meek_fires(g, a, b):
                    g = g.set_mark(a, b, EdgeMark.DIRECTED)
                    changed = True
    return g


def _meek_fires(g: CausalGraph, a: int, b: int) -> bool:
    # R1: some c -> a with c, b nonadjacent  (orients a -> b)
    for c in g.parents(a):
        if c != b and not g.is_adjacent(c, b):
            return True
    # R2: chain a -> c -> b
    for c in g.children(a):
        if g.has_directed(c, b):
            return True
    # R3: two undirected neighbours c, d of a, both directed into b, c,d nonadjacent
    into_b = [c for c in g.adjacent(a) if g.has_undirected(a, c) and g.has_directed(c, b)]
    for p in range(len(into_b)):
        for q in range(p + 1, len(into_b)):
            if not g.is_adjacent(into_b[p], into_b[q]):
                return True
    # R4: c -> d -> b with a adjacent to both c and d, and c, b nonadjacent
    for d_node in g.parents(b):
        if d_node == a or not g.is_adjacent(a, d_node):
            continue
        for c in g.parents(d_node):
            if c in (a, b):
                continue
            if g.is_adjacent(a, c) and not g.is_adjacent(c, b):
                return True
    return False


def run_pc(
    ds: Optional[Dataset] = None,
    tester=None,
    alpha: float = 0.05,
    max_cond: Optional[int] = None,
) -> CausalGraph:
    """Full PC run: skeleton, v-structures, Meek closure. Returns a CPDAG."""
    if tester is None:
        if ds is None:
            raise ValueError("run_pc needs a dataset or an explicit tester")
        tester = AutoTester(ds, alpha=alpha)
    skeleton, sepsets = learn_skeleton(tester, max_cond=max_cond)
    oriented = orient_v_structures(skeleton, sepsets)
    return apply_meek_rules(oriented)
