"""Tabular dataset ingestion, preprocessing, ground-truth graphs, synthetic SCMs.

CSV inputs are comma-separated with a header row; empty fields and the
literal "NA" are both treated as missing. Ground truth comes as a
line-oriented edge list (``source -> target``, ``#`` comments).
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AllRowsDropped,
    CycleInGroundTruth,
    DuplicateEdge,
    EmptyDataset,
    MissingFile,
    RaggedRow,
    UnknownNode,
)
from .graphs import CausalGraph, EdgeMark, is_acyclic

DISCRETE = "discrete"
CONTINUOUS = "continuous"

# inference rule: integer-valued column with at most this many distinct values
MAX_DISCRETE_LEVELS = 20

MISSING_TOKENS = {"", "NA"}


@dataclass(frozen=True)
class VariableMeta:
    """Name, kind, and optional free-text description of one column."""

    name: str
    kind: str = CONTINUOUS
    cardinality: Optional[int] = None
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be nonempty")
        if self.kind not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"bad kind: {self.kind!r}")
        if self.kind == DISCRETE:
            if self.cardinality is None or self.cardinality < 2:
                raise ValueError("discrete variables need cardinality >= 2")
        elif self.cardinality is not None:
            raise ValueError("continuous variables take no cardinality")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE


@dataclass(frozen=True)
class Dataset:
    """n x d numeric matrix with per-column metadata.

    Discrete values are stored as category indices; missing entries are NaN
    until removed by :func:`preprocess`.
    """

    variables: tuple[VariableMeta, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-d matrix")
        if rows.shape[1] != len(self.variables):
            raise ValueError("row width does not match variable count")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        for k, v in enumerate(self.variables):
            if v.is_discrete:
                col = rows[:, k]
                vals = col[~np.isnan(col)]
                if vals.size and (
                    np.any(vals != np.round(vals))
                    or vals.min() < 0
                    or vals.max() >= v.cardinality
                ):
                    raise ValueError(
                        f"discrete column {v.name!r} must hold indices in [0, {v.cardinality})"
                    )
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def column(self, k: int) -> np.ndarray:
        return self.rows[:, k]

    def is_continuous(self, k: int) -> bool:
        return not self.variables[k].is_discrete

    def all_continuous(self) -> bool:
        return all(not v.is_discrete for v in self.variables)

    def all_discrete(self) -> bool:
        return all(v.is_discrete for v in self.variables)


# --- CSV loading -------------------------------------------------------------

def load_csv(path: str, schema: Optional[Sequence[VariableMeta]] = None) -> Dataset:
    """Load a header-first CSV file into a Dataset.

    Without a schema, kinds are inferred: a column whose values are all
    integers with at most MAX_DISCRETE_LEVELS distinct values is discrete
    (re-encoded to category indices in sorted value order), non-numeric
    columns are discrete by string category, anything else is continuous.
    """
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if len(header) == 0 or len(set(header)) != len(header) or any(h == "" for h in header):
            raise EmptyDataset(f"{path} must start with a header of unique column names")
        raw: list[list[str]] = []
        for idx, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise RaggedRow(idx)
            raw.append([cell.strip() for cell in row])
    if not raw:
        raise EmptyDataset(f"{path} has no data rows")
    if schema is not None:
        schema = list(schema)
        if [v.name for v in schema] != header:
            raise ValueError("schema names must match the CSV header in order")
        cols = [_parse_numeric_column([r[k] for r in raw]) for k in range(len(header))]
        rows = np.column_stack(cols)
        return Dataset(tuple(schema), rows)

    variables = []
    cols = []
    for k, name in enumerate(header):
        tokens = [r[k] for r in raw]
        meta, col = _infer_column(name, tokens)
        variables.append(meta)
        cols.append(col)
    return Dataset(tuple(variables), np.column_stack(cols))


def _parse_numeric_column(tokens: list[str]) -> np.ndarray:
    out = np.empty(len(tokens), dtype=float)
    for i, t in enumerate(tokens):
        if t in MISSING_TOKENS:
            out[i] = np.nan
        else:
            out[i] = float(t)
    return out


def _infer_column(name: str, tokens: list[str]) -> tuple[VariableMeta, np.ndarray]:
    present = [t for t in tokens if t not in MISSING_TOKENS]
    try:
        values = [float(t) for t in present]
    except ValueError:
        # non-numeric: categorical by string, indices in sorted order
        levels = sorted(set(present))
        lut = {s: float(i) for i, s in enumerate(levels)}
        col = np.array(
            [np.nan if t in MISSING_TOKENS else lut[t] for t in tokens], dtype=float
        )
        return VariableMeta(name, DISCRETE, cardinality=max(len(levels), 2)), col

    col = _parse_numeric_column(tokens)
    distinct = sorted(set(values))
    if (
        values
        and all(float(v).is_integer() for v in values)
        and len(distinct) <= MAX_DISCRETE_LEVELS
    ):
        lut = {v: float(i) for i, v in enumerate(distinct)}
        enc = np.array(
            [np.nan if math.isnan(x) else lut[x] for x in col], dtype=float
        )
        return VariableMeta(name, DISCRETE, cardinality=max(len(distinct), 2)), enc
    return VariableMeta(name, CONTINUOUS), col


# --- preprocessing -----------------------------------------------------------

IMPUTE_DROP = "drop"
IMPUTE_FILL = "mean"  # mean for continuous columns, mode for discrete ones


def preprocess(ds: Dataset, impute: str = IMPUTE_FILL, standardize: bool = False) -> Dataset:
    """Remove missing entries and optionally z-score continuous columns.

    ``impute="drop"`` removes rows containing any missing value;
    ``impute="mean"`` fills column mean (continuous) or mode (discrete).
    Standardization leaves discrete columns untouched and maps constant
    continuous columns to all zeros.
    """
    if ds.n == 0 or ds.d == 0:
        raise EmptyDataset("cannot preprocess an empty dataset")
    rows = np.array(ds.rows, dtype=float)
    if impute == IMPUTE_DROP:
        keep = ~np.isnan(rows).any(axis=1)
        rows = rows[keep]
        if rows.shape[0] == 0:
            raise AllRowsDropped("drop imputation removed every row")
    elif impute == IMPUTE_FILL:
        for k in range(ds.d):
            col = rows[:, k]
            nan = np.isnan(col)
            if not nan.any():
                continue
            vals = col[~nan]
            if vals.size == 0:
                raise AllRowsDropped(f"column {ds.variables[k].name!r} is entirely missing")
            if ds.variables[k].is_discrete:
                levels, counts = np.unique(vals, return_counts=True)
                fill = levels[np.argmax(counts)]  # ties: smallest level
            else:
                fill = vals.mean()
            col[nan] = fill
    else:
        raise ValueError(f"bad impute option: {impute!r}")

    if standardize:
        for k in range(ds.d):
            if ds.variables[k].is_discrete:
                continue
            col = rows[:, k]
            mu = col.mean()
            sd = col.std()
            if sd < 1e-12:
                rows[:, k] = 0.0
            else:
                rows[:, k] = (col - mu) / sd
    return Dataset(ds.variables, rows)


# --- ground truth ------------------------------------------------------------

def load_ground_truth(path: str, variables: Sequence[VariableMeta]) -> CausalGraph:
    """Parse a ``source -> target`` edge list into a fully directed DAG."""
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    names = [v.name for v in variables]
    g = CausalGraph(names)
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "->" not in text:
            raise ValueError(f"{path}:{lineno}: expected 'source -> target'")
        src, dst = (part.strip() for part in text.split("->", 1))
        if src not in g.nodes:
            raise UnknownNode(src)
        if dst not in g.nodes:
            raise UnknownNode(dst)
        if (src, dst) in seen:
            raise DuplicateEdge(f"{src} -> {dst} listed twice")
        if (dst, src) in seen:
            # setting the reverse mark would silently overwrite the first edge
            raise CycleInGroundTruth(f"{src} -> {dst} and {dst} -> {src} both present")
        seen.add((src, dst))
        g = g.set_mark(src, dst, EdgeMark.DIRECTED)
    if not is_acyclic(g):
        raise CycleInGroundTruth(f"{path} does not describe a DAG")
    return g


def save_ground_truth(g: CausalGraph, path: str) -> None:
    """Write the directed edges of a graph in the edge-list format."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in sorted(g.directed_edges()):
            fh.write(f"{g.nodes[i]} -> {g.nodes[j]}\n")


# --- synthetic SCMs ----------------------------------------------------------

NOISE_GAUSSIAN = "gaussian"
NOISE_UNIFORM = "uniform"

MIN_WEIGHT_MAGNITUDE = 0.3


@dataclass(frozen=True)
class ScmSpec:
    """Parameters of a random linear structural causal model."""

    d: int
    edge_probability: float
    weight_range: tuple[float, float] = (0.5, 2.0)
    noise_kind: str = NOISE_GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if not 0.0 < self.edge_probability <= 1.0:
            raise ValueError("edge_probability must lie in (0, 1]")
        lo, hi = self.weight_range
        if not (MIN_WEIGHT_MAGNITUDE <= lo <= hi):
            raise ValueError(
                f"weight magnitudes must satisfy {MIN_WEIGHT_MAGNITUDE} <= lo <= hi"
            )
        if self.noise_kind not in (NOISE_GAUSSIAN, NOISE_UNIFORM):
            raise ValueError(f"bad noise kind: {self.noise_kind!r}")


def scm_weight_matrix(spec: ScmSpec) -> np.ndarray:
    """The weight matrix W (edge i -> j at W[i, j]) drawn for this spec.

    Drawn first from the seed's stream, so it matches the W underlying
    sample_scm(spec, n) for any n.
    """
    rng = np.random.default_rng(spec.seed)
    return _draw_weights(rng, spec)


def _draw_weights(rng: np.random.Generator, spec: ScmSpec) -> np.ndarray:
    d = spec.d
    order = rng.permutation(d)
    lo, hi = spec.weight_range
    W = np.zeros((d, d))
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < spec.edge_probability:
                w = rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0)
                W[order[a], order[b]] = w
    return W


def sample_scm(spec: ScmSpec, n: int) -> tuple[Dataset, CausalGraph]:
    """Draw a random DAG and n samples of the linear SEM x = W^T x + e.

    Noise has unit variance per variable (uniform noise is centered with
    matching variance). Deterministic for a fixed spec.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(spec.seed)
    W = _draw_weights(rng, spec)
    names = tuple(f"x{i + 1}" for i in range(spec.d))
    X = _simulate_linear_sem(W, n, rng, spec.noise_kind)
    variables = tuple(VariableMeta(name, CONTINUOUS) for name in names)
    truth = _graph_from_weights(W, names)
    return Dataset(variables, X), truth


def simulate_dataset(
    truth: CausalGraph,
    n: int,
    seed: int,
    weight_range: tuple[float, float] = (0.5, 2.0),
    noise_kind: str = NOISE_GAUSSIAN,
) -> Dataset:
    """Sample linear-SEM data over a given fully directed DAG.

    Edge coefficients are drawn uniformly from the magnitude range with
    random sign; useful for building datasets that match a known structure.
    """
    if not truth.is_fully_directed() or not is_acyclic(truth):
        raise ValueError("simulate_dataset needs a fully directed DAG")
    rng = np.random.default_rng(seed)
    lo, hi = weight_range
    d = truth.d
    W = np.zeros((d, d))
    for i, j in sorted(truth.directed_edges()):
        W[i, j] = rng.uniform(lo, hi) * (1.0 if rng.random() < 0.5 else -1.0)
    X = _simulate_linear_sem(W, n, rng, noise_kind)
    variables = tuple(VariableMeta(name, CONTINUOUS) for name in truth.nodes)
    return Dataset(variables, X)


def _simulate_linear_sem(
    W: np.ndarray, n: int, rng: np.random.Generator, noise_kind: str
) -> np.ndarray:
    d = W.shape[0]
    if noise_kind == NOISE_GAUSSIAN:
        E = rng.standard_normal((n, d))
    else:
        half_width = math.sqrt(3.0)  # unit variance
        E = rng.uniform(-half_width, half_width, size=(n, d))
    # x = W^T x + e  =>  X (I - W) = E
    return np.linalg.solve((np.eye(d) - W).T, E.T).T


def _graph_from_weights(W: np.ndarray, names: Sequence[str]) -> CausalGraph:
    g = CausalGraph(names)
    for i, j in zip(*np.nonzero(W)):
        g = g.set_mark(int(i), int(j), EdgeMark.DIRECTED)
    return g


def analytic_covariance(W: np.ndarray, noise_variances: np.ndarray | None = None) -> np.ndarray:
    """Covariance (I-W)^-T Sigma_e (I-W)^-1 implied by a linear SEM."""
    d = W.shape[0]
    sigma = np.eye(d) if noise_variances is None else np.diag(noise_variances)
    inv = np.linalg.inv(np.eye(d) - W)
    return inv.T @ sigma @ inv
