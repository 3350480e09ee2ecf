"""Matrix-function primitives: matrix exponential and the smooth acyclicity term.

h(W) = tr(exp(W∘W)) - d is zero exactly when W is the adjacency matrix of a
DAG, and positive otherwise; its gradient is exp(W∘W)^T ∘ 2W.
"""

import numpy as np
import scipy.linalg as slin


def matrix_exp(A):
    """Matrix exponential of a square matrix (Pade scaling-and-squaring)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected square matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("non-finite entries in matrix_exp input")
    with np.errstate(over="ignore", invalid="ignore"):
        return slin.expm(A)


def acyclicity_h(W):
    """h(W) = tr(exp(W∘W)) - d; zero iff W has no directed cycle.

    Overflowing inputs (exp of a huge matrix) give +inf rather than a warning
    storm; line searches treat that as an arbitrarily bad point.
    """
    W = np.asarray(W, dtype=float)
    E = matrix_exp(W * W)
    t = float(np.trace(E))
    return t - W.shape[0] if np.isfinite(t) else np.inf


def acyclicity_grad(W):
    """Gradient of acyclicity_h: exp(W∘W)^T ∘ 2W."""
    W = np.asarray(W, dtype=float)
    E = matrix_exp(W * W)
    return E.T * (2.0 * W)


def h_and_grad(W):
    """(h, grad) sharing a single exponential evaluation.

    On overflow returns (+inf, 0) so a box-constrained line search backs off
    instead of propagating NaNs.
    """
    W = np.asarray(W, dtype=float)
    E = matrix_exp(W * W)
    if not np.isfinite(E).all():
        return np.inf, np.zeros_like(W)
    return float(np.trace(E)) - W.shape[0], E.T * (2.0 * W)
