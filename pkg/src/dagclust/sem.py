"""Subject data container and the SEM reconstruction loss.

The loss (1/2m)||X - XW||_F^2 and its gradient are evaluated from the
cached Gram matrix G = X^T X only, so iterative solvers never touch the
raw rows after the one-time preprocessing step.
"""

import numpy as np


class SubjectData:
    """One subject's m x d measurement matrix with cached Gram matrix."""

    __slots__ = ("id", "X", "gram", "m", "d")

    def __init__(self, id, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        self.id = id
        self.X = X
        self.m = X.shape[0]
        self.d = X.shape[1]
        self.gram = X.T @ X

    def __repr__(self):
        return f"SubjectData(id={self.id}, m={self.m}, d={self.d})"


def _check_dims(subject, W):
    W = np.asarray(W, dtype=float)
    if W.shape != (subject.d, subject.d):
        raise ValueError(f"W shape {W.shape} does not match d={subject.d}")
    return W


def reconstruction_loss(subject, W):
    """(1/2m)||X - XW||_F^2 computed from the Gram matrix alone."""
    W = _check_dims(subject, W)
    G = subject.gram
    GW = G @ W
    val = np.trace(G) - 2.0 * np.sum(G * W) + np.sum(W * GW)
    return float(val) / (2.0 * subject.m)


def reconstruction_grad(subject, W):
    """Gradient (1/m) G (W - I) of the reconstruction loss."""
    W = _check_dims(subject, W)
    G = subject.gram
    return (G @ W - G) / subject.m


def loss_and_grad(subject, W):
    """(loss, grad) sharing one Gram multiply."""
    W = _check_dims(subject, W)
    G = subject.gram
    GW = G @ W
    val = (np.trace(G) - 2.0 * np.sum(G * W) + np.sum(W * GW)) / (2.0 * subject.m)
    return float(val), (GW - G) / subject.m
