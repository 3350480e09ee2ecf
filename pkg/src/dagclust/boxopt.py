"""Bound-constrained smooth minimization (limited-memory quasi-Newton) and
an l1-penalized wrapper using nonnegative variable splitting W = W+ - W-.
"""

import numpy as np
import scipy.optimize as sopt


class BoxProblem:
    """Smooth objective with per-coordinate box bounds.

    objective: callable x -> (value, gradient); bounds: sequence of
    (lower, upper) pairs, None for unbounded.
    """

    def __init__(self, objective, bounds, tol=1e-6, max_iter=500):
        self.objective = objective
        self.bounds = list(bounds)
        self.tol = tol
        self.max_iter = max_iter


def minimize_box(problem, x0):
    """Minimize a BoxProblem from feasible x0; returns (x, f, status).

    status is 'converged' (projected-gradient tolerance met), 'max_iter',
    or 'abnormal' (line-search breakdown; result still usable).  Non-finite
    objective values raise ArithmeticError.
    """
    x0 = np.asarray(x0, dtype=float)
    res = sopt.minimize(
        problem.objective, x0, method="L-BFGS-B", jac=True,
        bounds=problem.bounds,
        options={"maxcor": 10, "ftol": 1e-12, "gtol": problem.tol,
                 "maxiter": problem.max_iter},
    )
    if not np.isfinite(res.fun) or not np.isfinite(res.x).all():
        raise ArithmeticError(f"non-finite objective in box minimization: {res.message}")
    code = res.get("status", 0 if res.success else 2)
    if code == 0:
        status = "converged"
    elif code == 1:
        status = "max_iter"
    else:
        status = "abnormal"
    return res.x, float(res.fun), status


def minimize_l1_smooth(smooth, lambda1, d, w0=None, mask=None, tol=1e-6, max_iter=500):
    """Minimize smooth(W) + lambda1*||W||_1 over d x d W with zero diagonal.

    smooth: callable W -> (value, gradient).  The l1 term is handled by the
    split W = W+ - W-, W+/- >= 0, giving a smooth bound-constrained problem.
    mask: optional boolean d x d array of free entries (True = optimizable);
    defaults to all off-diagonal entries.  Masked-out entries are pinned at 0.
    """
    if mask is None:
        mask = ~np.eye(d, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool) & ~np.eye(d, dtype=bool)
    free = mask.ravel()

    def _func(v):
        wp, wm = v[:d * d], v[d * d:]
        W = (wp - wm).reshape(d, d)
        val, grad = smooth(W)
        g = grad.ravel()
        obj = val + lambda1 * (wp.sum() + wm.sum())
        return obj, np.concatenate([g + lambda1, -g + lambda1])

    bounds = [(0.0, None) if free[k] else (0.0, 0.0) for k in range(d * d)] * 2
    if w0 is None:
        v0 = np.zeros(2 * d * d)
    else:
        w0 = np.asarray(w0, dtype=float).ravel()
        v0 = np.concatenate([np.maximum(w0, 0.0), np.maximum(-w0, 0.0)])
        v0[~np.concatenate([free, free])] = 0.0
    prob = BoxProblem(_func, bounds, tol=tol, max_iter=max_iter)
    v, _, _ = minimize_box(prob, v0)
    W = (v[:d * d] - v[d * d:]).reshape(d, d)
    W[~mask] = 0.0
    return W
