"""Hybrid combination of the three discovery engines.

Per-method composite scores (accuracy minus NHD) become voting weights,
either by direct clamped normalization or through a small softmax network
trained on synthetic corpora. Weighted edge votes above a threshold are
retained; edges proposed by exactly one method and below the threshold can
be arbitrated by an LLM client.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, ScmSpec, VariableMeta, sample_scm
from .errors import ClientError, EmptyCorpus, NodeSetMismatch, NonFiniteInput
from .graphs import (
    CausalGraph,
    EdgeMark,
    find_directed_cycle,
    graph_features,
    is_acyclic,
    summarize_edges,
)
from .lingam import run_lingam
from .metrics import EvaluationReport, evaluate
from .notears import run_notears
from .pc import run_pc
from .prompts import PromptKind, build_edge_prompt, render
from .refiner import KEEP, Confidence, Unparseable, parse_verdict

log = logging.getLogger(__name__)

METHOD_PC = "pc"
METHOD_LINGAM = "lingam"
METHOD_NOTEARS = "notears"
METHODS = (METHOD_PC, METHOD_LINGAM, METHOD_NOTEARS)

COMPOSITE_FLOOR = 1e-6
FEATURE_COUNT = 9
LAYER_SIZES = (FEATURE_COUNT, 64, 32, 3)


@dataclass(frozen=True)
class MethodOutput:
    method: str
    graph: CausalGraph
    report: EvaluationReport

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class WeightVector:
    w_pc: float
    w_lingam: float
    w_notears: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w_pc, self.w_lingam, self.w_notears])

    def weight_for(self, method: str) -> float:
        return self.as_array()[METHODS.index(method)]


def normalize_weights(composites: Sequence[float]) -> WeightVector:
    """Clamp composites at a small positive floor, then normalize to sum one."""
    clamped = np.maximum(np.asarray(composites, dtype=float), COMPOSITE_FLOOR)
    w = clamped / clamped.sum()
    return WeightVector(*map(float, w))


# --- weight network -----------------------------------------------------------

class WeightNet:
    """9 -> 64 -> 32 -> 3 perceptron, rectified hidden layers, softmax output."""

    def __init__(self, layers: Optional[list[tuple[np.ndarray, np.ndarray]]] = None):
        if layers is None:
            layers = [
                (np.zeros((LAYER_SIZES[k], LAYER_SIZES[k + 1])), np.zeros(LAYER_SIZES[k + 1]))
                for k in range(len(LAYER_SIZES) - 1)
            ]
        for k, (W, b) in enumerate(layers):
            if W.shape != (LAYER_SIZES[k], LAYER_SIZES[k + 1]) or b.shape != (LAYER_SIZES[k + 1],):
                raise ValueError(f"layer {k} has wrong shape {W.shape}, {b.shape}")
        self.layers = [(np.array(W, dtype=float), np.array(b, dtype=float)) for W, b in layers]

    @classmethod
    def random_init(cls, seed: int) -> "WeightNet":
        rng = np.random.default_rng(seed)
        layers = []
        for k in range(len(LAYER_SIZES) - 1):
            fan_in = LAYER_SIZES[k]
            W = rng.standard_normal((fan_in, LAYER_SIZES[k + 1])) * np.sqrt(2.0 / fan_in)
            layers.append((W, np.zeros(LAYER_SIZES[k + 1])))
        return cls(layers)

    def save(self, path: str) -> None:
        doc = {
            "sizes": list(LAYER_SIZES),
            "layers": [{"w": W.tolist(), "b": b.tolist()} for W, b in self.layers],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path: str) -> "WeightNet":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if tuple(doc.get("sizes", ())) != LAYER_SIZES:
            raise ValueError(f"unexpected layer sizes {doc.get('sizes')}")
        layers = [(np.array(l["w"]), np.array(l["b"])) for l in doc["layers"]]
        return cls(layers)


def _forward_trace(net: WeightNet, X: np.ndarray) -> list[np.ndarray]:
    """Activations per layer for a batch; the last entry is the softmax output."""
    acts = [X]
    h = X
    for k, (W, b) in enumerate(net.layers):
        z = h @ W + b
        if k < len(net.layers) - 1:
            h = np.maximum(z, 0.0)
        else:
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            h = e / e.sum(axis=1, keepdims=True)
        acts.append(h)
    return acts


def net_forward(net: WeightNet, features: Sequence[float]) -> WeightVector:
    """Evaluate the network on one feature vector; output sums to one."""
    x = np.asarray(features, dtype=float)
    if x.shape != (FEATURE_COUNT,):
        raise NonFiniteInput(f"expected {FEATURE_COUNT} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("feature vector contains non-finite values")
    out = _forward_trace(net, x[None, :])[-1][0]
    return WeightVector(*map(float, out))


def train_net(
    corpus: Sequence[tuple[np.ndarray, np.ndarray]],
    lr: float = 0.05,
    epochs: int = 3000,
    seed: int = 0,
    batch_size: int = 32,
    momentum: float = 0.9,
) -> tuple[WeightNet, float]:
    """Minibatch gradient descent (with momentum) on MSE against target weights.

    Returns the trained network and its final full-corpus MSE.
    """
    if not corpus:
        raise EmptyCorpus("training corpus is empty")
    X = np.array([np.asarray(f, dtype=float) for f, _ in corpus])
    T = np.array([np.asarray(t, dtype=float) for _, t in corpus])
    if X.shape[1] != FEATURE_COUNT or T.shape[1] != 3:
        raise ValueError("corpus rows must be (9 features, 3 targets)")
    rng = np.random.default_rng(seed)
    net = WeightNet.random_init(seed)
    velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in net.layers]

    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            acts = _forward_trace(net, X[idx])
            y = acts[-1]
            # d(MSE)/dy, then through the softmax jacobian
            dy = 2.0 * (y - T[idx]) / (y.shape[0] * y.shape[1])
            dz = y * (dy - np.sum(dy * y, axis=1, keepdims=True))
            grads = []
            delta = dz
            for k in range(len(net.layers) - 1, -1, -1):
                W, _ = net.layers[k]
                gW = acts[k].T @ delta
                gb = delta.sum(axis=0)
                grads.append((gW, gb))
                if k > 0:
                    delta = (delta @ W.T) * (acts[k] > 0)
            grads.reverse()
            new_layers = []
            new_velocity = []
            for (W, b), (gW, gb), (vW, vb) in zip(net.layers, grads, velocity):
                vW = momentum * vW - lr * gW
                vb = momentum * vb - lr * gb
                new_layers.append((W + vW, b + vb))
                new_velocity.append((vW, vb))
            net = WeightNet(new_layers)
            velocity = new_velocity
    final = _forward_trace(net, X)[-1]
    mse = float(np.mean((final - T) ** 2))
    return net, mse


# --- corpus generation ----------------------------------------------------------

def union_graph(graphs: Sequence[CausalGraph]) -> CausalGraph:
    """Skeleton union; orientation kept only when the votes are unanimous."""
    nodes = graphs[0].nodes
    for g in graphs[1:]:
        if g.nodes != nodes:
            raise NodeSetMismatch("method outputs disagree on the node list")
    out = CausalGraph(nodes)
    d = len(nodes)
    for i in range(d):
        for j in range(i + 1, d):
            fwd = any(g.has_directed(i, j) for g in graphs)
            rev = any(g.has_directed(j, i) for g in graphs)
            und = any(g.has_undirected(i, j) for g in graphs)
            if fwd and not rev and not und:
                out = out.set_mark(i, j, EdgeMark.DIRECTED)
            elif rev and not fwd and not und:
                out = out.set_mark(j, i, EdgeMark.DIRECTED)
            elif fwd or rev or und:
                out = out.set_mark(i, j, EdgeMark.UNDIRECTED)
    return out


def run_engines(ds: Dataset, seed: int = 0, notears_h_tol: float = 1e-8) -> dict[str, CausalGraph]:
    """All three engines on one dataset (continuous columns assumed)."""
    return {
        METHOD_PC: run_pc(ds),
        METHOD_LINGAM: run_lingam(ds, seed=seed),
        METHOD_NOTEARS: run_notears(ds, h_tol=notears_h_tol),
    }


def method_outputs(
    graphs: dict[str, CausalGraph], reference: CausalGraph
) -> list[MethodOutput]:
    """Evaluate each engine's graph against a reference (truth or proxy)."""
    return [
        MethodOutput(method=m, graph=graphs[m], report=evaluate(graphs[m], reference))
        for m in METHODS
    ]


def build_features(outputs: Sequence[MethodOutput], n_samples: int) -> np.ndarray:
    """Nine weight-network inputs: three composites plus union-graph features."""
    by_method = {o.method: o for o in outputs}
    composites = [by_method[m].report.composite for m in METHODS]
    union = union_graph([by_method[m].graph for m in METHODS])
    return np.concatenate([composites, graph_features(union, n_samples).as_array()])


def generate_corpus(
    count: int, seed: int, progress=None
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Synthetic training corpus: run the engines on random SCMs of varied
    size, density, noise, and sample count; targets are the normalized
    truth composites."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    corpus = []
    for k in range(count):
        d = int(rng.integers(3, 7))
        spec = ScmSpec(
            d=d,
            edge_probability=float(rng.uniform(0.2, 0.8)),
            weight_range=(0.5, 2.0),
            noise_kind="uniform" if rng.random() < 0.5 else "gaussian",
            seed=int(rng.integers(0, 2**31)),
        )
        n = int(rng.integers(150, 400))
        ds, truth = sample_scm(spec, n)
        # corpus graphs are threshold-insensitive to the last digits of h,
        # so a looser constraint tolerance buys a large speedup
        graphs = run_engines(ds, seed=int(rng.integers(0, 2**31)), notears_h_tol=1e-6)
        outputs = method_outputs(graphs, truth)
        features = build_features(outputs, n)
        target = normalize_weights([o.report.composite for o in outputs]).as_array()
        corpus.append((features, target))
        if progress is not None:
            progress(k + 1, count)
    return corpus


# --- voting ---------------------------------------------------------------------

def edge_scores(
    outputs: Sequence[MethodOutput], w: WeightVector
) -> dict[tuple[int, int], float]:
    """Weighted vote per ordered pair; an undirected edge votes both ways."""
    by_method = {o.method: o for o in outputs}
    if set(by_method) != set(METHODS) or len(outputs) != len(METHODS):
        raise ValueError("combination needs exactly one output per method")
    nodes = outputs[0].graph.nodes
    for o in outputs:
        if o.graph.nodes != nodes:
            raise NodeSetMismatch("method outputs disagree on the node list")
    scores: dict[tuple[int, int], float] = {}
    for m in METHODS:
        g = by_method[m].graph
        wm = w.weight_for(m)
        for i, j in g.directed_edges():
            scores[(i, j)] = scores.get((i, j), 0.0) + wm
        for i, j in g.undirected_edges():
            scores[(i, j)] = scores.get((i, j), 0.0) + wm
            scores[(j, i)] = scores.get((j, i), 0.0) + wm
    return scores


def _vote_counts(outputs: Sequence[MethodOutput]) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for o in outputs:
        for i, j in o.graph.directed_edges():
            counts[(i, j)] = counts.get((i, j), 0) + 1
        for i, j in o.graph.undirected_edges():
            counts[(i, j)] = counts.get((i, j), 0) + 1
            counts[(j, i)] = counts.get((j, i), 0) + 1
    return counts


def repair_cycles(g: CausalGraph, scores: dict[tuple[int, int], float]) -> CausalGraph:
    """Drop the weakest-scored edge on each directed cycle until acyclic."""
    while not is_acyclic(g):
        cycle = find_directed_cycle(g)
        weakest = min(cycle, key=lambda e: (scores.get(e, 0.0), e))
        g = g.set_mark(weakest[0], weakest[1], EdgeMark.ABSENT)
    return g


def combine(
    outputs: Sequence[MethodOutput],
    w: WeightVector,
    tau: float = 0.5,
    llm=None,
    meta: Optional[Sequence[VariableMeta]] = None,
    domain: str = "",
    min_arbitration_confidence: Confidence = Confidence.HIGH,
) -> CausalGraph:
    """Weighted vote with threshold tau, plus LLM arbitration of edges that a
    single method proposed below threshold.

    If both orientations clear tau the higher-scored one wins (ties stay
    undirected); the result is cycle-repaired before being returned.
    """
    scores = edge_scores(outputs, w)
    counts = _vote_counts(outputs)
    nodes = outputs[0].graph.nodes
    g = CausalGraph(nodes)
    d = len(nodes)
    for i in range(d):
        for j in range(i + 1, d):
            s_fwd = scores.get((i, j), 0.0)
            s_rev = scores.get((j, i), 0.0)
            if s_fwd > tau and s_rev > tau:
                if s_fwd > s_rev:
                    g = g.set_mark(i, j, EdgeMark.DIRECTED)
                elif s_rev > s_fwd:
                    g = g.set_mark(j, i, EdgeMark.DIRECTED)
                else:
                    g = g.set_mark(i, j, EdgeMark.UNDIRECTED)
            elif s_fwd > tau:
                g = g.set_mark(i, j, EdgeMark.DIRECTED)
            elif s_rev > tau:
                g = g.set_mark(j, i, EdgeMark.DIRECTED)

    if llm is not None:
        g = _arbitrate_unique_edges(
            g, outputs, scores, counts, tau, llm, meta, domain,
            min_arbitration_confidence,
        )
    return repair_cycles(g, scores)


def _arbitrate_unique_edges(
    g: CausalGraph,
    outputs: Sequence[MethodOutput],
    scores: dict,
    counts: dict,
    tau: float,
    llm,
    meta: Optional[Sequence[VariableMeta]],
    domain: str,
    min_confidence: Confidence,
) -> CausalGraph:
    nodes = outputs[0].graph.nodes
    if meta is None:
        meta = [VariableMeta(n) for n in nodes]
    by_method = {o.method: o for o in outputs}
    for (i, j) in sorted(scores):
        if scores[(i, j)] > tau or counts.get((i, j), 0) != 1:
            continue
        if g.is_adjacent(i, j):
            continue
        proposer = next(
            m for m in METHODS
            if by_method[m].graph.has_directed(i, j) or by_method[m].graph.has_undirected(i, j)
        )
        prompt = render(
            build_edge_prompt(
                (nodes[i], nodes[j]),
                proposer,
                summarize_edges(g),
                meta,
                domain,
                kind=PromptKind.UNIQUE_EDGE_ARBITRATION,
            )
        )
        try:
            response = llm.complete(prompt)
            verdict = parse_verdict(response)
        except Unparseable:
            continue
        except ClientError as exc:
            log.warning("arbitration skipped after client failure: %s", exc)
            break
        if verdict.decision == KEEP and verdict.confidence >= min_confidence:
            g = g.set_mark(i, j, EdgeMark.DIRECTED)
    return g
