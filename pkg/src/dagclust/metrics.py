"""Clustering metrics (ARI, homogeneity/completeness), structure-recovery
metrics (directed and skeleton TPR/FDR/TNR), and validation reconstruction
error.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import adjusted_rand_score, homogeneity_score, completeness_score


@dataclass
class EdgeMetrics:
    tpr: float
    fdr: float
    tnr: float


def _check_lengths(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label length mismatch: {a.shape} vs {b.shape}")
    return a, b


def ari(labels_a, labels_b):
    """Hubert-Arabie adjusted Rand index between two partitions."""
    a, b = _check_lengths(labels_a, labels_b)
    if a.size < 2:
        raise ValueError("need at least two elements")
    return float(adjusted_rand_score(a, b))


def homogeneity_completeness(truth, pred):
    """Entropy-based cluster purity and class aggregation, both in [0, 1];
    zero-entropy cases return 1 by convention."""
    t, p = _check_lengths(truth, pred)
    return float(homogeneity_score(t, p)), float(completeness_score(t, p))


def skeleton_of(W, delta):
    """Undirected edge pattern: B_ab = 1 iff max(|W_ab|, |W_ba|) >= delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    W = np.asarray(W, dtype=float)
    B = (np.maximum(np.abs(W), np.abs(W.T)) >= delta).astype(int)
    np.fill_diagonal(B, 0)
    return B


def directed_edges(W, delta):
    """Directed edge pattern: 1 iff |W_ab| >= delta, zero diagonal."""
    W = np.asarray(W, dtype=float)
    B = (np.abs(W) >= delta).astype(int)
    np.fill_diagonal(B, 0)
    return B


def edge_metrics(est, truth, directed):
    """TPR/FDR/TNR over off-diagonal cells (directed) or unordered pairs
    (undirected).  Conventions: FDR = 0 with no predicted edges; TPR = 1
    with no true edges; TNR = 1 with no true non-edges."""
    est = np.asarray(est).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if est.shape != truth.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {truth.shape}")
    d = est.shape[0]
    if directed:
        sel = ~np.eye(d, dtype=bool)
    else:
        sel = np.triu(np.ones((d, d), dtype=bool), k=1)
    e = est[sel]
    t = truth[sel]
    tp = int(np.sum(e & t))
    fp = int(np.sum(e & ~t))
    tn = int(np.sum(~e & ~t))
    pos = int(t.sum())
    neg = int((~t).sum())
    tpr = tp / pos if pos else 1.0
    fdr = fp / (tp + fp) if (tp + fp) else 0.0
    tnr = tn / neg if neg else 1.0
    return EdgeMetrics(tpr=tpr, fdr=fdr, tnr=tnr)


def validation_recon_error(val_data, labels, consensus):
    """n^{-1} sum_i (1/2m_i)||X_val,i - X_val,i W_{cluster(i)}||_F^2."""
    labels = np.asarray(labels)
    if len(val_data) != labels.size:
        raise ValueError("one label per validation subject required")
    if labels.size and (labels.min() < 0 or labels.max() >= len(consensus)):
        raise ValueError("label outside consensus range")
    total = 0.0
    for s, l in zip(val_data, labels):
        R = s.X - s.X @ consensus[l]
        total += np.sum(R * R) / (2.0 * s.m)
    return total / len(val_data)
