"""Post-processing of a fit: dissimilarity matrix from fused differences,
complete-linkage agglomeration cut at height tau, and per-cluster consensus
adjacency matrices with hard thresholding.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ClusteringResult:
    labels: np.ndarray      # n cluster indices, 0-based contiguous
    theta_norms: np.ndarray  # symmetric n x n dissimilarity matrix
    consensus: list          # one WeightMatrix per cluster
    delta: float
    n_clusters: int = 0

    def __post_init__(self):
        self.n_clusters = len(self.consensus)


def dissimilarity_matrix(state):
    """Theta_ij = ||theta_hat_ij||_F, symmetric with zero diagonal."""
    n = len(state.W)
    Theta = np.zeros((n, n))
    for (i, j), p in state.pairs.items():
        Theta[i, j] = Theta[j, i] = np.linalg.norm(p.theta)
    return Theta


def complete_linkage_cut(theta, tau):
    """Agglomerate while the minimum inter-cluster complete-linkage distance
    (max pairwise dissimilarity) stays <= tau; ties broken by the smallest
    cluster-index pair.  Labels are assigned by first subject appearance.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    D = theta.copy()
    active = list(range(n))
    members = {i: [i] for i in range(n)}
    while len(active) > 1:
        best = None
        for a in range(len(active)):
            for b in range(a + 1, len(active)):
                u, v = active[a], active[b]
                if best is None or D[u, v] < best[0]:
                    best = (D[u, v], u, v)
        if best[0] > tau:
            break
        _, u, v = best
        for w in active:
            if w != u and w != v:
                D[u, w] = D[w, u] = max(D[u, w], D[v, w])
        members[u].extend(members[v])
        del members[v]
        active.remove(v)
    labels = np.empty(n, dtype=int)
    for u in active:
        labels[members[u]] = min(members[u])
    _, labels = np.unique(labels, return_inverse=True)  # relabel by first appearance
    return labels


def consensus_matrices(labels, W, delta):
    """Per-cluster mean of member matrices, then entries |.| < delta zeroed."""
    labels = np.asarray(labels)
    R = labels.max() + 1
    out = []
    for r in range(R):
        idx = np.flatnonzero(labels == r)
        if idx.size == 0:
            raise ValueError(f"cluster {r} is empty; labels must be contiguous")
        M = np.mean([W[i] for i in idx], axis=0)
        M[np.abs(M) < delta] = 0.0
        out.append(M)
    return out


def cluster_fit(state, tau, delta=0.02):
    """Cut the fitted dissimilarities at height tau and build consensus DAGs."""
    Theta = dissimilarity_matrix(state)
    labels = complete_linkage_cut(Theta, tau)
    consensus = consensus_matrices(labels, state.W, delta)
    return ClusteringResult(labels=labels, theta_norms=Theta,
                            consensus=consensus, delta=delta)
