"""Single-DAG learner (augmented-Lagrangian with the trace-exponential
acyclicity penalty) and the Population / Individual / Oracle baselines.
"""

from dataclasses import dataclass

import numpy as np

from .matfun import acyclicity_h, h_and_grad
from .boxopt import minimize_l1_smooth

RHO_MAX = 1e16


@dataclass
class SingleFitOptions:
    lambda1: float = 0.01
    rho_init: float = 1.0
    rho_growth: float = 10.0
    h_tol: float = 1e-8
    max_outer: int = 100
    alpha_init: float = 0.0
    inner_tol: float = 1e-6
    inner_max_iter: int = 500


def _pooled_terms(subjects):
    """Aggregate Gram pieces so the pooled loss sum_i (1/2m_i)||X_i - X_i W||^2
    reduces to (c0 - 2<Gbar,W> + <W, Gbar W>)/2."""
    d = subjects[0].d
    Gbar = np.zeros((d, d))
    c0 = 0.0
    for s in subjects:
        if s.d != d:
            raise ValueError("subjects disagree on variable count d")
        Gbar += s.gram / s.m
        c0 += np.trace(s.gram) / s.m
    return Gbar, c0


def fit_single_dag(subjects, opts):
    """Fit one DAG to pooled subject data; returns (W, status).

    status: 'converged' (h <= h_tol and relative objective change < 1e-6),
    'diverged' (penalty exceeded 1e16), or 'max_outer'.
    """
    if not isinstance(subjects, (list, tuple)):
        subjects = [subjects]
    Gbar, c0 = _pooled_terms(subjects)
    d = subjects[0].d

    def smooth(W, alpha, rho):
        GW = Gbar @ W
        loss = 0.5 * (c0 - 2.0 * np.sum(Gbar * W) + np.sum(W * GW))
        grad = GW - Gbar
        if d > 1:
            h, gh = h_and_grad(W)
            if not np.isfinite(h):
                return np.inf, grad
            loss += alpha * h + 0.5 * rho * h * h
            grad = grad + (alpha + rho * h) * gh
        return loss, grad

    W = np.zeros((d, d))
    alpha, rho = opts.alpha_init, opts.rho_init
    h_prev, obj_prev = np.inf, np.inf
    status = "max_outer"
    for _ in range(opts.max_outer):
        W = minimize_l1_smooth(lambda M: smooth(M, alpha, rho), opts.lambda1, d,
                               w0=W, tol=opts.inner_tol, max_iter=opts.inner_max_iter)
        h = acyclicity_h(W)
        GW = Gbar @ W
        obj = 0.5 * (c0 - 2.0 * np.sum(Gbar * W) + np.sum(W * GW)) \
            + opts.lambda1 * np.abs(W).sum()
        if h <= opts.h_tol and abs(obj - obj_prev) < 1e-6 * max(1.0, abs(obj_prev)):
            status = "converged"
            break
        alpha += rho * h
        if h > 0.25 * h_prev and h > opts.h_tol:
            rho *= opts.rho_growth
            if rho > RHO_MAX:
                status = "diverged"
                break
        h_prev, obj_prev = h, obj
    W[np.abs(W) < 1e-8] = 0.0
    return W, status


def run_baseline(kind, scenario, opts):
    """Per-subject DAG estimates for one of the three reference schemes.

    population: one pooled fit replicated for all subjects.
    individual: an independent fit per subject.
    oracle: one pooled fit per true cluster, assigned by true label.
    """
    subjects = scenario.subjects
    n = len(subjects)
    if kind == "population":
        W, _ = fit_single_dag(subjects, opts)
        return [W.copy() for _ in range(n)]
    if kind == "individual":
        return [fit_single_dag([s], opts)[0] for s in subjects]
    if kind == "oracle":
        labels = scenario.true_labels
        if labels is None:
            raise ValueError("oracle baseline requires true labels")
        labels = np.asarray(labels)
        fits = {}
        for r in np.unique(labels):
            members = [s for s, l in zip(subjects, labels) if l == r]
            fits[r] = fit_single_dag(members, opts)[0]
        return [fits[l].copy() for l in labels]
    raise ValueError(f"unknown baseline kind: {kind!r}")
