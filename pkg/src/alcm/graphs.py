"""Mixed causal graph: DAG / CPDAG with absent, directed, and undirected marks.

Graphs are immutable values: every mutation returns a new graph, and the
underlying mark matrix is write-protected, so instances are safe to share.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedDocument, NotADag, SelfLoop, UnknownNode

# mark matrix encoding
ABSENT = 0
DIRECTED = 1
UNDIRECTED = 2


class EdgeMark(Enum):
    ABSENT = ABSENT
    DIRECTED = DIRECTED
    UNDIRECTED = UNDIRECTED


class CausalGraph:
    """Node-labeled mixed graph over an ordered node list.

    ``marks[i, j] == DIRECTED`` encodes the edge i -> j (and forces
    ``marks[j, i] == ABSENT``); UNDIRECTED marks are stored symmetrically.
    """

    __slots__ = ("nodes", "_marks", "_index")

    def __init__(self, nodes: Sequence[str], marks: np.ndarray | None = None):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise ValueError("node names must be unique")
        d = len(nodes)
        if marks is None:
            marks = np.zeros((d, d), dtype=np.int8)
        else:
            marks = np.asarray(marks, dtype=np.int8).copy()
            if marks.shape != (d, d):
                raise ValueError(f"marks must be {d}x{d}")
            _check_mark_invariants(marks)
        marks.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "_marks", marks)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(nodes)})

    def __setattr__(self, name, value):
        raise AttributeError("CausalGraph is immutable")

    # --- basic queries ----------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.nodes)

    def index(self, node) -> int:
        """Resolve a node name (or pass through an index) to an index."""
        if isinstance(node, (int, np.integer)):
            if not 0 <= node < self.d:
                raise UnknownNode(node)
            return int(node)
        try:
            return self._index[node]
        except KeyError:
            raise UnknownNode(node) from None

    def mark(self, i, j) -> EdgeMark:
        return EdgeMark(int(self._marks[self.index(i), self.index(j)]))

    def marks_matrix(self) -> np.ndarray:
        """Read-only d x d mark matrix."""
        return self._marks

    def has_directed(self, i, j) -> bool:
        return self._marks[self.index(i), self.index(j)] == DIRECTED

    def has_undirected(self, i, j) -> bool:
        return self._marks[self.index(i), self.index(j)] == UNDIRECTED

    def is_adjacent(self, i, j) -> bool:
        return self._marks[self.index(i), self.index(j)] != ABSENT or \
            self._marks[self.index(j), self.index(i)] != ABSENT

    def directed_edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self._marks == DIRECTED))]

    def undirected_edges(self) -> list[tuple[int, int]]:
        """Undirected edges, each reported once with i < j."""
        out = []
        for i, j in zip(*np.nonzero(self._marks == UNDIRECTED)):
            if i < j:
                out.append((int(i), int(j)))
        return out

    def edge_count(self) -> int:
        return len(self.directed_edges()) + len(self.undirected_edges())

    def adjacent(self, i) -> list[int]:
        """Skeleton neighbours of node i, in index order."""
        i = self.index(i)
        row = (self._marks[i, :] != ABSENT) | (self._marks[:, i] != ABSENT)
        return [int(k) for k in np.nonzero(row)[0]]

    def parents(self, j) -> list[int]:
        j = self.index(j)
        return [int(i) for i in np.nonzero(self._marks[:, j] == DIRECTED)[0]]

    def children(self, i) -> list[int]:
        i = self.index(i)
        return [int(j) for j in np.nonzero(self._marks[i, :] == DIRECTED)[0]]

    def degree(self, i) -> int:
        return len(self.adjacent(i))

    def is_fully_directed(self) -> bool:
        return not np.any(self._marks == UNDIRECTED)

    # --- mutation (returns new graphs) -------------------------------------

    def set_mark(self, i, j, mark: EdgeMark) -> "CausalGraph":
        """Return a copy with mark(i, j) updated, keeping symmetry invariants.

        Setting DIRECTED(i, j) clears (j, i); UNDIRECTED sets both entries;
        ABSENT clears both.
        """
        i, j = self.index(i), self.index(j)
        if i == j:
            raise SelfLoop(f"self loop on node {self.nodes[i]!r}")
        m = self._marks.copy()
        if mark is EdgeMark.DIRECTED:
            m[i, j] = DIRECTED
            m[j, i] = ABSENT
        elif mark is EdgeMark.UNDIRECTED:
            m[i, j] = UNDIRECTED
            m[j, i] = UNDIRECTED
        else:
            m[i, j] = ABSENT
            m[j, i] = ABSENT
        return CausalGraph(self.nodes, m)

    def with_nodes_added(self, new_nodes: Iterable[str]) -> "CausalGraph":
        new_nodes = [n for n in new_nodes if n not in self._index]
        if not new_nodes:
            return self
        nodes = self.nodes + tuple(new_nodes)
        m = np.zeros((len(nodes), len(nodes)), dtype=np.int8)
        m[: self.d, : self.d] = self._marks
        return CausalGraph(nodes, m)

    # --- value semantics ----------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return self.nodes == other.nodes and np.array_equal(self._marks, other._marks)

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq

    __hash__ = None

    def __repr__(self) -> str:
        return f"CausalGraph(d={self.d}, edges={self.edge_count()})"


def _check_mark_invariants(m: np.ndarray) -> None:
    if np.any(np.diag(m) != ABSENT):
        raise SelfLoop("diagonal marks must be absent")
    if not np.all((m >= ABSENT) & (m <= UNDIRECTED)):
        raise ValueError("invalid mark value")
    und = m == UNDIRECTED
    if not np.array_equal(und, und.T):
        raise ValueError("undirected marks must be symmetric")
    both_dir = (m == DIRECTED) & (m.T == DIRECTED)
    if np.any(both_dir):
        raise ValueError("directed mark present in both orientations")
    # directed one way with undirected the other is ruled out by the two checks above


# --- structural queries -----------------------------------------------------

def is_acyclic(g: CausalGraph) -> bool:
    """True iff the directed subgraph has no directed cycle (undirected marks ignored)."""
    adj = g.marks_matrix() == DIRECTED
    indeg = adj.sum(axis=0)
    queue = [i for i in range(g.d) if indeg[i] == 0]
    seen = 0
    indeg = indeg.copy()
    while queue:
        i = queue.pop()
        seen += 1
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
    return seen == g.d


def find_directed_cycle(g: CausalGraph) -> list[tuple[int, int]] | None:
    """Return the edge list of some directed cycle, or None if the graph is acyclic.

    Deterministic: DFS visits nodes and successors in index order.
    """
    adj = g.marks_matrix() == DIRECTED
    color = [0] * g.d  # 0 unvisited, 1 on stack, 2 done
    stack: list[int] = []

    def dfs(u: int) -> list[tuple[int, int]] | None:
        color[u] = 1
        stack.append(u)
        for v in np.nonzero(adj[u])[0]:
            v = int(v)
            if color[v] == 1:
                k = stack.index(v)
                cyc = stack[k:] + [v]
                return list(zip(cyc[:-1], cyc[1:]))
            if color[v] == 0:
                found = dfs(v)
                if found is not None:
                    return found
        stack.pop()
        color[u] = 2
        return None

    for s in range(g.d):
        if color[s] == 0:
            found = dfs(s)
            if found is not None:
                return found
    return None


def would_create_cycle(g: CausalGraph, i, j) -> bool:
    """Would adding the directed edge i -> j close a directed cycle?

    Ignores any existing mark between i and j (useful when reversing).
    """
    i, j = g.index(i), g.index(j)
    if i == j:
        return True
    adj = g.marks_matrix() == DIRECTED
    # search for a directed path j ~> i that does not use the (i, j) pair
    stack = [j]
    seen = {j}
    while stack:
        u = stack.pop()
        if u == i:
            return True
        for v in np.nonzero(adj[u])[0]:
            v = int(v)
            if u == i and v == j:
                continue
            if (u, v) == (j, i):
                continue
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return False


def topological_order(g: CausalGraph) -> list[int]:
    """A topological order of the directed part; raises NotADag on a cycle."""
    adj = g.marks_matrix() == DIRECTED
    indeg = adj.sum(axis=0).copy()
    queue = sorted(i for i in range(g.d) if indeg[i] == 0)
    order = []
    while queue:
        i = queue.pop(0)
        order.append(i)
        for j in np.nonzero(adj[i])[0]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(int(j))
        queue.sort()
    if len(order) != g.d:
        raise NotADag("directed part contains a cycle")
    return order


# --- features for the hybrid weight network ---------------------------------

NODE_COUNT_SCALE = 100.0
SAMPLE_COUNT_LOG_SCALE = 6.0  # log10 of 1e6


@dataclass(frozen=True)
class GraphFeatures:
    """Normalized structural summary used as weight-network input."""

    density: float
    mean_degree_norm: float
    degree_std_norm: float
    sparsity: float
    node_count_norm: float
    sample_count_norm: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.density,
                self.mean_degree_norm,
                self.degree_std_norm,
                self.sparsity,
                self.node_count_norm,
                self.sample_count_norm,
            ],
            dtype=float,
        )


def graph_features(g: CausalGraph, n_samples: int) -> GraphFeatures:
    """Structural features of a graph, all scaled to [0, 1].

    Density counts every skeleton edge once against the d(d-1)/2 possible
    pairs; degrees are skeleton degrees normalized by d-1.
    """
    d = g.d
    if d < 2:
        raise ValueError("graph_features requires at least 2 nodes")
    edges = g.edge_count()
    density = edges / (d * (d - 1) / 2)
    degrees = np.array([g.degree(i) for i in range(d)], dtype=float)
    mean_degree_norm = float(degrees.mean() / (d - 1))
    degree_std_norm = float(degrees.std() / (d - 1))
    return GraphFeatures(
        density=float(density),
        mean_degree_norm=mean_degree_norm,
        degree_std_norm=degree_std_norm,
        sparsity=float(1.0 - density),
        node_count_norm=min(d / NODE_COUNT_SCALE, 1.0),
        sample_count_norm=min(math.log10(max(n_samples, 1)) / SAMPLE_COUNT_LOG_SCALE, 1.0),
    )


# --- CPDAG of a DAG ----------------------------------------------------------

def cpdag_of_dag(dag: CausalGraph) -> CausalGraph:
    """Markov equivalence class representative of a fully directed DAG.

    Keeps the skeleton, directs the DAG's unshielded colliders, closes
    under the orientation rules, and leaves the rest undirected.
    """
    if not dag.is_fully_directed():
        raise NotADag("input must be fully directed")
    if not is_acyclic(dag):
        raise NotADag("input contains a directed cycle")
    g = CausalGraph(dag.nodes)
    for i, j in dag.directed_edges():
        g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
    # direct the v-structures exactly as in the DAG
    for k in range(dag.d):
        pa = dag.parents(k)
        for a_pos in range(len(pa)):
            for b_pos in range(a_pos + 1, len(pa)):
                a, b = pa[a_pos], pa[b_pos]
                if not dag.is_adjacent(a, b):
                    g = g.set_mark(a, k, EdgeMark.DIRECTED)
                    g = g.set_mark(b, k, EdgeMark.DIRECTED)
    from .pc import apply_meek_rules  # deferred: pc builds on this module

    return apply_meek_rules(g)


# --- serialization -----------------------------------------------------------

def to_json(g: CausalGraph) -> str:
    doc = {
        "nodes": list(g.nodes),
        "edges": [
            {"from": g.nodes[i], "to": g.nodes[j], "mark": "directed"}
            for i, j in sorted(g.directed_edges())
        ]
        + [
            {"from": g.nodes[i], "to": g.nodes[j], "mark": "undirected"}
            for i, j in sorted(g.undirected_edges())
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def from_json(doc: str) -> CausalGraph:
    try:
        data = json.loads(doc)
        nodes = data["nodes"]
        edges = data["edges"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedDocument(f"bad graph document: {exc}") from exc
    if not isinstance(nodes, list) or not all(isinstance(n, str) for n in nodes):
        raise MalformedDocument("nodes must be a list of strings")
    try:
        g = CausalGraph(nodes)
    except ValueError as exc:
        raise MalformedDocument(str(exc)) from exc
    for e in edges:
        try:
            src, dst, mark = e["from"], e["to"], e["mark"]
        except (KeyError, TypeError) as exc:
            raise MalformedDocument(f"bad edge entry: {e!r}") from exc
        if mark == "directed":
            m = EdgeMark.DIRECTED
        elif mark == "undirected":
            m = EdgeMark.UNDIRECTED
        else:
            raise MalformedDocument(f"bad mark: {mark!r}")
        try:
            g = g.set_mark(src, dst, m)
        except (UnknownNode, SelfLoop) as exc:
            raise MalformedDocument(str(exc)) from exc
    return g


def to_dot(g: CausalGraph) -> str:
    lines = ["digraph G {"]
    for n in g.nodes:
        lines.append(f'  "{n}";')
    for i, j in sorted(g.directed_edges()):
        lines.append(f'  "{g.nodes[i]}" -> "{g.nodes[j]}";')
    for i, j in sorted(g.undirected_edges()):
        lines.append(f'  "{g.nodes[i]}" -> "{g.nodes[j]}" [dir=none];  // {g.nodes[i]} -- {g.nodes[j]}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def summarize_edges(g: CausalGraph) -> str:
    """Human-readable edge list used inside prompts ("a -> b", "a -- b")."""
    parts = [f"{g.nodes[i]} -> {g.nodes[j]}" for i, j in sorted(g.directed_edges())]
    parts += [f"{g.nodes[i]} -- {g.nodes[j]}" for i, j in sorted(g.undirected_edges())]
    if not parts:
        return "no edges yet"
    return "; ".join(parts)
