"""Synthetic scenario generator: random cluster DAGs, linear-SEM simulation,
and subject assignment by cluster proportions.
"""

from dataclasses import dataclass, field

import numpy as np

from .matfun import acyclicity_h
from .sem import SubjectData


@dataclass(frozen=True)
class ScenarioSpec:
    n: int
    m: int
    d: int
    cluster_proportions: tuple
    edges_per_dag: int
    sigma: float
    seed: int

    def __post_init__(self):
        props = tuple(float(p) for p in self.cluster_proportions)
        object.__setattr__(self, "cluster_proportions", props)
        if abs(sum(props) - 1.0) > 1e-12:
            raise ValueError(f"cluster proportions sum to {sum(props)}, expected 1")
        if self.edges_per_dag > self.d * (self.d - 1) // 2:
            raise ValueError("edges_per_dag exceeds the number of strict upper-triangle slots")


@dataclass
class Scenario:
    subjects: list
    true_labels: np.ndarray
    true_dags: list
    spec: ScenarioSpec = None


def generate_cluster_dag(d, edges, rng):
    """Random DAG adjacency: `edges` strict-upper-triangle slots get weights
    with magnitude in [0.2, 0.5] and random sign, then a random node
    permutation is applied to rows and columns simultaneously."""
    slots = d * (d - 1) // 2
    if edges > slots:
        raise ValueError(f"requested {edges} edges but only {slots} slots available")
    iu = np.triu_indices(d, k=1)
    pick = rng.choice(slots, size=edges, replace=False)
    mags = rng.uniform(0.2, 0.5, size=edges)
    signs = np.where(rng.random(edges) < 0.5, -1.0, 1.0)
    W = np.zeros((d, d))
    W[iu[0][pick], iu[1][pick]] = signs * mags
    p = rng.permutation(d)
    return W[np.ix_(p, p)]


def simulate_subject(idx, W, m, sigma, rng):
    """Simulate m i.i.d. rows of X = Z (I - W)^{-1}, Z ~ N(0, sigma^2 I)."""
    d = W.shape[0]
    Z = sigma * rng.standard_normal((m, d))
    X = np.linalg.solve((np.eye(d) - W).T, Z.T).T
    return SubjectData(idx, X)


def cluster_sizes(n, proportions):
    """Largest-remainder apportionment of n subjects to the proportions."""
    quotas = np.asarray(proportions, dtype=float) * n
    sizes = np.floor(quotas).astype(int)
    rem = n - sizes.sum()
    order = np.argsort(-(quotas - sizes), kind="stable")
    for r in order[:rem]:
        sizes[r] += 1
    return sizes.tolist()


def generate_scenario(spec):
    """Generate per-cluster DAGs, assign subjects by proportion, shuffle the
    subject order, and simulate each subject's data. Pure function of seed."""
    rng = np.random.default_rng(spec.seed)
    R = len(spec.cluster_proportions)
    dags = [generate_cluster_dag(spec.d, spec.edges_per_dag, rng) for _ in range(R)]
    for W in dags:
        assert acyclicity_h(W) < 1e-8
    sizes = cluster_sizes(spec.n, spec.cluster_proportions)
    labels = np.repeat(np.arange(R), sizes)
    labels = labels[rng.permutation(spec.n)]
    subjects = [simulate_subject(i, dags[labels[i]], spec.m, spec.sigma, rng)
                for i in range(spec.n)]
    return Scenario(subjects=subjects, true_labels=labels, true_dags=dags, spec=spec)
