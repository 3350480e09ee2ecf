"""Joint DAG estimation with fused clustering: difference-of-convex outer
loop around an ADMM inner loop.

The objective couples per-subject SEM losses, l1 sparsity, acyclicity
constraints h(W_i) = 0, and a groupwise truncated-lasso fusion penalty
min(||theta_ij||_F, tau) on auxiliary pairwise differences
theta_ij = W_i - W_j.  Each DC iteration freezes the indicator
I(||theta_hat_ij||_F < tau): pairs below tau keep the convex fusion term
lambda2*||theta_ij||_F, pairs above contribute the constant lambda2*tau.
The resulting convex surrogate (plus augmented-Lagrangian acyclicity
terms) is solved by scaled ADMM with Gauss-Seidel W-sweeps.
"""

from dataclasses import dataclass, field

import numpy as np

from .matfun import acyclicity_h, h_and_grad
from .sem import loss_and_grad, reconstruction_loss
from .boxopt import minimize_l1_smooth


@dataclass
class Hyperparams:
    lambda1: float
    lambda2: float
    tau: float
    rho1_init: float = 0.1
    rho2: float = 0.05
    eta_rho1: float = 10.0
    xi: float = 0.25
    eps_out: float = 1e-4
    admm_primal_tol: float = 1e-4
    admm_dual_tol: float = 1e-4
    max_dc_iter: int = 30
    max_admm_iter: int = 200
    upper_triangular_mode: bool = False
    inner_tol: float = 1e-6
    inner_max_iter: int = 500

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.rho1_init, self.rho2) < 0:
            raise ValueError("penalty parameters must be nonnegative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.eta_rho1 <= 1:
            raise ValueError("eta_rho1 must exceed 1")
        if not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")


@dataclass
class PairState:
    theta: np.ndarray
    U: np.ndarray


@dataclass
class FitState:
    W: list
    pairs: dict            # (i, j) with i < j -> PairState
    alpha: np.ndarray      # acyclicity multipliers, one per subject
    rho1_current: float
    indicator: dict        # (i, j) -> True when ||theta_hat||_F < tau (fused)
    surrogate_value: float = np.nan
    status: str = "init"


def pair_keys(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def tlp(beta, tau):
    """Truncated lasso penalty min(|beta|, tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return min(abs(beta), tau)


def _upper_mask(d):
    return np.triu(np.ones((d, d), dtype=bool), k=1)


def full_objective(state, data, hypers):
    """F = sum_i loss_i(W_i) + lambda1*sum||W_i||_1 + lambda2*sum TLP(||theta_ij||_F)."""
    val = 0.0
    for s, W in zip(data, state.W):
        val += reconstruction_loss(s, W) + hypers.lambda1 * np.abs(W).sum()
    for p in state.pairs.values():
        val += hypers.lambda2 * tlp(np.linalg.norm(p.theta), hypers.tau)
    return val


def surrogate_objective(state, data, hypers):
    """Indicator-frozen convex majorant of full_objective (equal when every
    ||theta_ij||_F sits on the same side of tau as its indicator)."""
    val = 0.0
    for s, W in zip(data, state.W):
        val += reconstruction_loss(s, W) + hypers.lambda1 * np.abs(W).sum()
    for key, p in state.pairs.items():
        if state.indicator[key]:
            val += hypers.lambda2 * np.linalg.norm(p.theta)
        else:
            val += hypers.lambda2 * hypers.tau
    return val


def w_update(i, state, data, hypers):
    """Solve subject i's subproblem given current values of all other blocks.

    Minimizes loss_i + lambda1*||W||_1 + alpha_i h + (rho1/2) h^2
    + (rho2/2) * sum over pairs containing i of ||W - T_p||_F^2, where the
    consensus target is T = W_j + theta + U when i is the pair's first
    element and T = W_j - theta - U when it is the second.
    """
    n = len(state.W)
    d = state.W[i].shape[0]
    S = np.zeros((d, d))
    q = 0.0
    for j in range(n):
        if j == i:
            continue
        if i < j:
            p = state.pairs[(i, j)]
            T = state.W[j] + p.theta + p.U
        else:
            p = state.pairs[(j, i)]
            T = state.W[j] - p.theta - p.U
        S += T
        q += float(np.sum(T * T))
    k = n - 1
    rho2 = hypers.rho2
    alpha_i = state.alpha[i]
    rho1 = state.rho1_current
    ut = hypers.upper_triangular_mode
    subj = data[i]

    def smooth(W):
        val, grad = loss_and_grad(subj, W)
        if k:
            val += 0.5 * rho2 * (k * np.sum(W * W) - 2.0 * np.sum(W * S) + q)
            grad = grad + rho2 * (k * W - S)
        if not ut:
            h, gh = h_and_grad(W)
            if not np.isfinite(h):
                return np.inf, grad
            val += alpha_i * h + 0.5 * rho1 * h * h
            grad = grad + (alpha_i + rho1 * h) * gh
        return val, grad

    mask = _upper_mask(d) if ut else None
    return minimize_l1_smooth(smooth, hypers.lambda1, d, w0=state.W[i], mask=mask,
                              tol=hypers.inner_tol, max_iter=hypers.inner_max_iter)


def theta_update(i, j, state, hypers):
    """Exact minimizer of the pair block: prox of lambda2*||.||_F at
    Delta = (W_i - W_j) - U_ij for fused pairs, Delta itself for capped ones."""
    p = state.pairs[(i, j)]
    Delta = state.W[i] - state.W[j] - p.U
    if not state.indicator[(i, j)]:
        return Delta.copy()
    gamma = hypers.lambda2 / hypers.rho2
    nrm = np.linalg.norm(Delta)
    if nrm <= gamma:
        return np.zeros_like(Delta)
    return (1.0 - gamma / nrm) * Delta


def dual_update(state, hypers, h_values=None):
    """Dual ascent: U_ij += theta_ij - (W_i - W_j) and (general mode)
    alpha_i += rho1 * h(W_i).  Returns the updated state."""
    for (i, j), p in state.pairs.items():
        p.U += p.theta - (state.W[i] - state.W[j])
    if not hypers.upper_triangular_mode:
        if h_values is None:
            h_values = [acyclicity_h(W) for W in state.W]
        for i, h in enumerate(h_values):
            state.alpha[i] += state.rho1_current * h
    return state


RHO1_CAP = 1e10


def adapt_rho1(h_new, h_old, state, hypers):
    """Escalate the acyclicity penalty when h fails to shrink by factor xi.

    Capped at RHO1_CAP: near machine-precision h the shrink test is noise and
    unbounded escalation only produces overflow in the exponential term.
    """
    if h_new > hypers.xi * h_old:
        state.rho1_current = min(state.rho1_current * hypers.eta_rho1, RHO1_CAP)
    return state


def _residuals(state):
    return {key: p.theta - (state.W[key[0]] - state.W[key[1]])
            for key, p in state.pairs.items()}


def admm_solve(state, data, hypers, outer=0, trace=None):
    """Run ADMM on the current surrogate until the primal/dual residuals and
    (general mode) the acyclicity values fall below tolerance.

    Returns (state, info); info records convergence flag, iteration count,
    and final residuals.  Non-convergence leaves the state usable.
    """
    n = len(state.W)
    ut = hypers.upper_triangular_mode
    h_values = [0.0] * n if ut else [acyclicity_h(W) for W in state.W]
    h_total_old = sum(h_values)
    info = {"converged": False, "iterations": 0, "primal": np.inf,
            "dual": np.inf, "max_h": max(h_values, default=0.0)}
    for k in range(1, hypers.max_admm_iter + 1):
        for i in range(n):
            state.W[i] = w_update(i, state, data, hypers)
        dual = 0.0
        for (i, j), p in state.pairs.items():
            new_theta = theta_update(i, j, state, hypers)
            dual = max(dual, hypers.rho2 * np.linalg.norm(new_theta - p.theta))
            p.theta = new_theta
        res = _residuals(state)
        primal = max((np.linalg.norm(r) for r in res.values()), default=0.0)
        if not ut:
            h_values = [acyclicity_h(W) for W in state.W]
        dual_update(state, hypers, h_values=h_values)
        h_total = sum(h_values)
        max_h = max(h_values, default=0.0)
        if not ut and h_total > 1e-8:
            adapt_rho1(h_total, h_total_old, state, hypers)
        h_total_old = h_total
        info.update(iterations=k, primal=primal, dual=dual, max_h=max_h)
        if trace is not None:
            trace.append({"outer": outer, "inner": k,
                          "fbar": surrogate_objective(state, data, hypers),
                          "f": full_objective(state, data, hypers),
                          "primal": primal, "dual": dual, "max_h": max_h,
                          "rho1": state.rho1_current})
        if primal <= hypers.admm_primal_tol and dual <= hypers.admm_dual_tol \
                and (ut or max_h <= 1e-8):
            info["converged"] = True
            break
    return state, info


def init_estimates(data, hypers):
    """Per-subject l1-only fits (DAG and consensus penalties off), pairwise
    differences as theta, zero duals.  Consensus holds exactly at s=0."""
    n = len(data)
    d = data[0].d
    mask = _upper_mask(d) if hypers.upper_triangular_mode else None
    W0 = []
    for s in data:
        if s.d != d:
            raise ValueError("subjects disagree on variable count d")
        smooth = lambda W, _s=s: loss_and_grad(_s, W)
        W0.append(minimize_l1_smooth(smooth, hypers.lambda1, d, mask=mask,
                                     tol=hypers.inner_tol, max_iter=hypers.inner_max_iter))
    pairs = {(i, j): PairState(theta=W0[i] - W0[j], U=np.zeros((d, d)))
             for (i, j) in pair_keys(n)}
    indicator = {key: np.linalg.norm(p.theta) < hypers.tau for key, p in pairs.items()}
    state = FitState(W=W0, pairs=pairs, alpha=np.zeros(n),
                     rho1_current=hypers.rho1_init, indicator=indicator)
    state.surrogate_value = surrogate_objective(state, data, hypers)
    return state


def dc_admm_fit(data, hypers):
    """Full solve: DC outer loop re-freezing fusion indicators, ADMM inner.

    Returns (state, trace).  trace = {"inner": [...], "outer": [...]} with one
    inner row per ADMM iteration (outer s, inner k, surrogate value, objective
    value, residuals, max h, rho1) and one outer row per DC iteration.
    """
    if len(data) == 0:
        raise ValueError("need at least one subject")
    state = init_estimates(data, hypers)
    inner_rows = []
    outer_rows = []
    fbar_prev = None
    state.status = "max_dc_iter"
    for s in range(1, hypers.max_dc_iter + 1):
        state.indicator = {key: np.linalg.norm(p.theta) < hypers.tau
                           for key, p in state.pairs.items()}
        state, info = admm_solve(state, data, hypers, outer=s, trace=inner_rows)
        fbar = surrogate_objective(state, data, hypers)
        state.surrogate_value = fbar
        res = _residuals(state)
        outer_rows.append({
            "s": s, "fbar": fbar, "f": full_objective(state, data, hypers),
            "primal": max((np.linalg.norm(r) for r in res.values()), default=0.0),
            "dual": info["dual"], "max_h": info["max_h"],
            "rho1": state.rho1_current, "admm_iterations": info["iterations"],
            "admm_converged": info["converged"],
            "indicator": dict(state.indicator),
        })
        if fbar_prev is not None and abs(fbar - fbar_prev) <= \
                hypers.eps_out * max(1.0, abs(fbar_prev)):
            state.status = "converged" if info["converged"] else "admm_max_iter"
            break
        fbar_prev = fbar
    for W in state.W:
        W[np.abs(W) < 1e-8] = 0.0
    return state, {"inner": inner_rows, "outer": outer_rows}
