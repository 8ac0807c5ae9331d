"""Continuous DAG learning: least squares under a trace-exponential acyclicity
penalty, optimized with an augmented Lagrangian outer loop.

The constraint h(W) = tr(exp(W * W)) - d is zero exactly when the support of
W is acyclic; its gradient exp(W * W)^T * 2W keeps the whole problem smooth.
The l1 term enters through a nonnegative split of W, so the inner problem is
a bound-constrained smooth minimization handled by L-BFGS-B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize as sopt

from .data import Dataset, preprocess
from .errors import NonFinite, ShapeMismatch
from .graphs import CausalGraph, EdgeMark, find_directed_cycle, is_acyclic

_TAYLOR_ORDER = 18


@dataclass(frozen=True)
class SolveTrace:
    outer_iterations: int
    final_h: float
    final_loss: float
    rho_final: float


def ls_loss_grad(W: np.ndarray, X: np.ndarray) -> tuple[float, np.ndarray]:
    """Smooth least squares part: (1/2n) ||X - XW||_F^2 and its exact gradient."""
    W = np.asarray(W, dtype=float)
    X = np.asarray(X, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or X.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"incompatible shapes X{X.shape}, W{W.shape}")
    n = X.shape[0]
    R = X @ W - X
    loss = 0.5 / n * float(np.sum(R * R))
    grad = (X.T @ R) / n
    return loss, grad


def _expm(A: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring over a fixed-order Taylor sum."""
    norm = np.linalg.norm(A, 1)
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    B = A / (2 ** squarings)
    E = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, _TAYLOR_ORDER + 1):
        term = term @ B / k
        E = E + term
    for _ in range(squarings):
        E = E @ E
    return E


def acyclicity_h(W: np.ndarray) -> tuple[float, np.ndarray]:
    """Constraint value tr(exp(W*W)) - d and gradient exp(W*W)^T * 2W."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ShapeMismatch(f"W must be square, got {W.shape}")
    E = _expm(W * W)
    h = float(np.trace(E)) - W.shape[0]
    grad = E.T * (2.0 * W)
    return h, grad


def augmented_lagrangian_solve(
    X: np.ndarray,
    lambda1: float = 0.1,
    h_tol: float = 1e-8,
    rho_max: float = 1e16,
    max_outer: int = 100,
) -> tuple[np.ndarray, SolveTrace]:
    """Minimize the penalized least squares objective until h is (near) zero.

    Each outer step minimizes loss + lambda1 ||W||_1 + (rho/2) h^2 + alpha h
    over the nonnegative split W = W+ - W-, then updates the multiplier; rho
    is escalated tenfold whenever h fails to shrink by 4x.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise NonFinite("input matrix contains non-finite values")
    n, d = X.shape

    def _adj(z: np.ndarray) -> np.ndarray:
        return (z[: d * d] - z[d * d :]).reshape(d, d)

    def _func(z: np.ndarray, rho: float, alpha: float):
        W = _adj(z)
        loss, g_loss = ls_loss_grad(W, X)
        h, g_h = acyclicity_h(W)
        obj = loss + lambda1 * z.sum() + 0.5 * rho * h * h + alpha * h
        g_smooth = g_loss + (rho * h + alpha) * g_h
        grad = np.concatenate([(g_smooth + lambda1).ravel(), (-g_smooth + lambda1).ravel()])
        return obj, grad

    bounds = [
        (0.0, 0.0) if i == j else (0.0, None)
        for _ in range(2)
        for i in range(d)
        for j in range(d)
    ]
    z = np.zeros(2 * d * d)
    rho, alpha, h_val = 1.0, 0.0, np.inf
    outer = 0
    for outer in range(1, max_outer + 1):
        z_new, h_new = None, None
        while rho < rho_max:
            sol = sopt.minimize(
                _func, z, args=(rho, alpha), method="L-BFGS-B", jac=True, bounds=bounds
            )
            z_new = sol.x
            if not np.all(np.isfinite(z_new)):
                raise NonFinite("inner minimization diverged")
            h_new, _ = acyclicity_h(_adj(z_new))
            if h_new > 0.25 * h_val:
                rho *= 10
            else:
                break
        z, h_val = z_new, h_new
        alpha += rho * h_val
        if h_val <= h_tol or rho >= rho_max:
            break
    W = _adj(z)
    loss, _ = ls_loss_grad(W, X)
    return W, SolveTrace(
        outer_iterations=outer, final_h=float(h_val), final_loss=loss, rho_final=rho
    )


def threshold_to_dag(W: np.ndarray, names, w_threshold: float) -> CausalGraph:
    """Hard-threshold W, then break any residual cycles at their weakest edge."""
    W = np.array(W, dtype=float)
    W[np.abs(W) < w_threshold] = 0.0
    g = CausalGraph(names)
    for i, j in zip(*np.nonzero(W)):
        g = g.set_mark(int(i), int(j), EdgeMark.DIRECTED)
    while not is_acyclic(g):
        cycle = find_directed_cycle(g)
        weakest = min(cycle, key=lambda e: abs(W[e[0], e[1]]))
        g = g.set_mark(weakest[0], weakest[1], EdgeMark.ABSENT)
        W[weakest[0], weakest[1]] = 0.0
    return g


def run_notears(
    ds: Dataset,
    w_threshold: float = 0.3,
    lambda1: float = 0.1,
    h_tol: float = 1e-8,
    rho_max: float = 1e16,
    max_outer: int = 100,
    standardize: bool = False,
) -> CausalGraph:
    """Center (optionally z-score), solve, threshold, and repair into a DAG.

    Centering is the default: rescaling every column to unit variance erases
    the scale information the least squares objective uses and measurably
    hurts recovery. Constant columns become identically zero either way, so
    no edges can touch them.
    """
    clean = preprocess(ds, impute="drop", standardize=standardize)
    X = clean.rows - clean.rows.mean(axis=0)
    W, _ = augmented_lagrangian_solve(
        X, lambda1=lambda1, h_tol=h_tol, rho_max=rho_max, max_outer=max_outer
    )
    return threshold_to_dag(W, ds.names, w_threshold)
