"""Graph evaluation: edge confusion, precision/recall/F1, accuracy, NHD, composite.

Conventions (documented because they pin down the reported numbers):

* accuracy is the Jaccard index tp / (tp + fp + fn) over edge decisions,
  reported as a fraction here and as a percentage in rendered tables;
* an undirected predicted edge earns a tp when its skeleton edge exists in
  the reference, but in NHD it sets both ordered-pair indicators, so
  unresolved orientation still costs distance;
* the NHD denominator is the full m^2 ordered-pair count, diagonal included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NodeSetMismatch
from .graphs import DIRECTED, UNDIRECTED, CausalGraph


@dataclass(frozen=True)
class EdgeConfusion:
    """Directed edge decision counts; tp + fn equals the reference edge count."""

    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvaluationReport:
    precision: float
    recall: float
    f1: float
    accuracy: float  # fraction in [0, 1]
    nhd: float
    composite: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "accuracy": self.accuracy,
                "nhd": self.nhd,
                "composite": self.composite,
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, doc: str) -> "EvaluationReport":
        data = json.loads(doc)
        return cls(**{k: float(data[k]) for k in
                      ("precision", "recall", "f1", "accuracy", "nhd", "composite")})


def _check_node_sets(pred: CausalGraph, truth: CausalGraph) -> None:
    if set(pred.nodes) != set(truth.nodes):
        raise NodeSetMismatch(
            f"prediction nodes {sorted(pred.nodes)} != reference nodes {sorted(truth.nodes)}"
        )


def _truth_edge_set(truth: CausalGraph) -> tuple[set, set]:
    """(directed pairs, undirected frozensets) of the reference by node name."""
    directed = {(truth.nodes[i], truth.nodes[j]) for i, j in truth.directed_edges()}
    undirected = {frozenset((truth.nodes[i], truth.nodes[j])) for i, j in truth.undirected_edges()}
    return directed, undirected


def edge_confusion(pred: CausalGraph, truth: CausalGraph) -> EdgeConfusion:
    """Count tp / fp / fn edge decisions against a reference graph.

    A directed prediction is a tp only when the reference agrees on the
    orientation (a reference undirected edge accepts either orientation);
    an undirected prediction is a tp when the skeleton edge exists. Every
    other predicted edge is a fp, and fn makes up the remainder of the
    reference edges, so reversed edges count against both sides.
    """
    _check_node_sets(pred, truth)
    t_dir, t_und = _truth_edge_set(truth)
    n_truth = len(t_dir) + len(t_und)
    tp = fp = 0
    for i, j in pred.directed_edges():
        a, b = pred.nodes[i], pred.nodes[j]
        if (a, b) in t_dir or frozenset((a, b)) in t_und:
            tp += 1
        else:
            fp += 1
    for i, j in pred.undirected_edges():
        a, b = pred.nodes[i], pred.nodes[j]
        if (a, b) in t_dir or (b, a) in t_dir or frozenset((a, b)) in t_und:
            tp += 1
        else:
            fp += 1
    return EdgeConfusion(tp=tp, fp=fp, fn=n_truth - tp)


def precision(c: EdgeConfusion) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: EdgeConfusion) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: EdgeConfusion) -> float:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else 0.0


def accuracy(c: EdgeConfusion) -> float:
    denom = c.tp + c.fp + c.fn
    return c.tp / denom if denom else 0.0


def _indicator(g: CausalGraph, order: tuple[str, ...]) -> np.ndarray:
    idx = [g.index(name) for name in order]
    m = g.marks_matrix()[np.ix_(idx, idx)]
    return ((m == DIRECTED) | (m == UNDIRECTED)).astype(np.int8)


def nhd(pred: CausalGraph, truth: CausalGraph) -> float:
    """Normalized Hamming distance over ordered-pair adjacency indicators.

    Undirected edges set both indicators; the count of differing entries is
    divided by m^2.
    """
    _check_node_sets(pred, truth)
    order = truth.nodes
    a = _indicator(pred, order)
    b = _indicator(truth, order)
    m = len(order)
    return float(np.sum(a != b)) / (m * m)


def composite(accuracy_fraction: float, nhd_value: float) -> float:
    """Composite method score: accuracy minus NHD."""
    return accuracy_fraction - nhd_value


def evaluate(pred: CausalGraph, truth: CausalGraph) -> EvaluationReport:
    c = edge_confusion(pred, truth)
    acc = accuracy(c)
    distance = nhd(pred, truth)
    return EvaluationReport(
        precision=precision(c),
        recall=recall(c),
        f1=f1(c),
        accuracy=acc,
        nhd=distance,
        composite=composite(acc, distance),
    )


def format_report_table(rows: dict[str, EvaluationReport]) -> str:
    """Plain-text table of reports keyed by label; accuracy shown as percent."""
    header = f"{'method':<14}{'precision':>10}{'recall':>10}{'f1':>10}{'accuracy%':>11}{'nhd':>10}{'composite':>11}"
    lines = [header, "-" * len(header)]
    for label, r in rows.items():
        lines.append(
            f"{label:<14}{r.precision:>10.4f}{r.recall:>10.4f}{r.f1:>10.4f}"
            f"{100 * r.accuracy:>11.2f}{r.nhd:>10.4f}{r.composite:>11.4f}"
        )
    return "\n".join(lines)
