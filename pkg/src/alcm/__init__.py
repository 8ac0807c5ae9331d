"""Causal discovery pipeline: PC, LiNGAM, and NOTEARS engines, a dynamically
weighted hybrid combiner, structured causal prompts, and an LLM-driven
refinement loop over pluggable clients."""

__version__ = "0.1.0"

from .data import Dataset, ScmSpec, VariableMeta, load_csv, load_ground_truth, preprocess, sample_scm
from .graphs import CausalGraph, EdgeMark, cpdag_of_dag, graph_features, is_acyclic
from .metrics import EvaluationReport, composite, edge_confusion, evaluate, nhd

__all__ = [
    "CausalGraph",
    "Dataset",
    "EdgeMark",
    "EvaluationReport",
    "ScmSpec",
    "VariableMeta",
    "composite",
    "cpdag_of_dag",
    "edge_confusion",
    "evaluate",
    "graph_features",
    "is_acyclic",
    "load_csv",
    "load_ground_truth",
    "nhd",
    "preprocess",
    "sample_scm",
]
