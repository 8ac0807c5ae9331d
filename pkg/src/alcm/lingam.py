"""ICA-based linear non-Gaussian causal ordering and coefficient estimation.

Pipeline: center/whiten, fixed-point ICA with tanh contrast and symmetric
decorrelation, diagonal-maximizing row assignment, lower-triangularizing
causal order, then ordinary least squares for the coefficients. Edges are
pruned by thresholding coefficients fitted on standardized data, which makes
the recovered structure invariant to column rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

from .data import Dataset, preprocess
from .errors import (
    DiscreteColumns,
    NotWhitened,
    SingularDesign,
    TooFewSamples,
    ZeroDiagonal,
)
from .graphs import CausalGraph, EdgeMark

EXACT_PERMUTATION_LIMIT = 8
WHITENESS_TOL = 1e-6


@dataclass(frozen=True)
class UnmixingResult:
    W: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class LingamModel:
    order: tuple[int, ...]
    B: np.ndarray


def center_whiten(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean, identity-covariance transform via eigendecomposition.

    Returns (whitened data, symmetric whitening matrix M) with Xw = Xc @ M;
    an unmixing matrix estimated on Xw maps back to the original coordinates
    as W @ M.
    """
    Xc = X - X.mean(axis=0)
    cov = np.cov(Xc, rowvar=False)
    cov = np.atleast_2d(cov)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 1e-12, None)
    M = vecs @ np.diag(vals ** -0.5) @ vecs.T
    return Xc @ M, M


def _sym_decorrelate(W: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(W @ W.T)
    vals = np.clip(vals, 1e-12, None)
    return vecs @ np.diag(vals ** -0.5) @ vecs.T @ W


def fast_ica(
    X: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 500,
    seed: int = 0,
) -> UnmixingResult:
    """Symmetric fixed-point ICA with tanh nonlinearity on whitened data.

    Convergence is declared when the largest row-angle change
    max |1 - |diag(W_new W^T)|| drops below tol; otherwise the last iterate
    is returned with converged=False.
    """
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    cov = np.atleast_2d(np.cov(X, rowvar=False))
    if np.linalg.norm(cov - np.eye(d)) > WHITENESS_TOL * max(1.0, np.sqrt(d)):
        raise NotWhitened("input covariance deviates from identity")
    if d == 1:
        return UnmixingResult(W=np.eye(1), iterations=0, converged=True)
    rng = np.random.default_rng(seed)
    W = _sym_decorrelate(rng.standard_normal((d, d)))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        WX = W @ X.T  # d x n source estimates
        g = np.tanh(WX)
        g_prime = 1.0 - g ** 2
        W_new = (g @ X) / n - np.diag(g_prime.mean(axis=1)) @ W
        W_new = _sym_decorrelate(W_new)
        lim = float(np.max(np.abs(np.abs(np.diag(W_new @ W.T)) - 1.0)))
        W = W_new
        if lim < tol:
            return UnmixingResult(W=W, iterations=iterations, converged=True)
    return UnmixingResult(W=W, iterations=iterations, converged=False)


def _assignment_cost(W: np.ndarray, perm: Sequence[int]) -> float:
    diag = np.abs(W[list(perm), range(len(perm))])
    if np.any(diag == 0):
        return np.inf
    return float(np.sum(1.0 / diag))


def _best_row_assignment(W: np.ndarray) -> tuple[int, ...]:
    d = W.shape[0]
    if d <= EXACT_PERMUTATION_LIMIT:
        best, best_cost = None, np.inf
        for perm in permutations(range(d)):
            cost = _assignment_cost(W, perm)
            if cost < best_cost:
                best, best_cost = perm, cost
        if best is None or not np.isfinite(best_cost):
            raise ZeroDiagonal("every row assignment leaves a zero diagonal")
        return tuple(best)
    # greedy: repeatedly take the largest remaining |W| entry
    absW = np.abs(W).copy()
    perm = [-1] * d
    for _ in range(d):
        r, c = np.unravel_index(np.argmax(absW), absW.shape)
        if absW[r, c] == 0:
            raise ZeroDiagonal("greedy assignment ran out of nonzero entries")
        perm[c] = int(r)
        absW[r, :] = -1.0
        absW[:, c] = -1.0
    return tuple(perm)


def _upper_triangle_ssq(B: np.ndarray, order: Sequence[int]) -> float:
    P = B[np.ix_(order, order)]
    return float(np.sum(np.triu(P, k=1) ** 2))


def _best_causal_order(B: np.ndarray) -> tuple[int, ...]:
    d = B.shape[0]
    if d <= EXACT_PERMUTATION_LIMIT:
        best, best_cost = None, np.inf
        for perm in permutations(range(d)):
            cost = _upper_triangle_ssq(B, perm)
            if cost < best_cost:
                best, best_cost = perm, cost
        return tuple(best)
    # greedy root extraction: smallest squared row mass over remaining columns
    remaining = list(range(d))
    order: list[int] = []
    while remaining:
        masses = [float(np.sum(B[i, remaining] ** 2) - B[i, i] ** 2) for i in remaining]
        pick = remaining[int(np.argmin(masses))]
        order.append(pick)
        remaining.remove(pick)
    return tuple(order)


def causal_order(result: UnmixingResult) -> tuple[int, ...]:
    """Estimate the causal order implied by an unmixing matrix.

    Rows are permuted to maximize the diagonal (minimizing sum 1/|W_ii|),
    rescaled to unit diagonal, and the order that best lower-triangularizes
    I - W' is returned. Exhaustive search up to EXACT_PERMUTATION_LIMIT
    variables, greedy beyond.
    """
    W = np.asarray(result.W, dtype=float)
    row_perm = _best_row_assignment(W)
    Wp = W[list(row_perm), :]
    diag = np.diag(Wp).copy()
    if np.any(diag == 0):
        raise ZeroDiagonal("assignment produced a zero diagonal entry")
    Wp = Wp / diag[:, None]
    B_hat = np.eye(W.shape[0]) - Wp
    return _best_causal_order(B_hat)


def regress_b(ds: Dataset, order: Sequence[int]) -> np.ndarray:
    """OLS coefficients of each variable on its predecessors in the order.

    Returns B with B[v, p] the coefficient of predecessor p in the equation
    for v; strictly lower triangular when permuted by the order.
    """
    if sorted(order) != list(range(ds.d)):
        raise ValueError("order must be a permutation of all variable indices")
    X = ds.rows - ds.rows.mean(axis=0)
    B = np.zeros((ds.d, ds.d))
    for pos in range(1, len(order)):
        v = order[pos]
        preds = list(order[:pos])
        A = X[:, preds]
        if np.linalg.matrix_rank(A) < len(preds):
            raise SingularDesign(f"collinear predecessors for variable {ds.names[v]!r}")
        coef, *_ = np.linalg.lstsq(A, X[:, v], rcond=None)
        B[v, preds] = coef
    return B


def run_lingam(
    ds: Dataset,
    prune_threshold: float = 0.1,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> CausalGraph:
    """Full pipeline, emitting a directed edge p -> v wherever |B[v, p]| clears
    the threshold on standardized data. Acyclic by construction."""
    if not ds.all_continuous():
        raise DiscreteColumns("linear non-Gaussian estimation needs continuous columns")
    if ds.n < 20 * ds.d:
        raise TooFewSamples(f"need n >= 20 d, got n={ds.n}, d={ds.d}")
    std = preprocess(ds, impute="drop", standardize=True)
    Xw, whitener = center_whiten(std.rows)
    white_result = fast_ica(Xw, tol=tol, max_iter=max_iter, seed=seed)
    # map the unmixing back to the original (standardized) coordinates
    unmixing = UnmixingResult(
        W=white_result.W @ whitener,
        iterations=white_result.iterations,
        converged=white_result.converged,
    )
    order = causal_order(unmixing)
    B = regress_b(std, order)
    g = CausalGraph(ds.names)
    for pos in range(1, len(order)):
        v = order[pos]
        for p in order[:pos]:
            if abs(B[v, p]) >= prune_threshold:
                g = g.set_mark(p, v, EdgeMark.DIRECTED)
    return g
