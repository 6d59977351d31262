"""Log-barrier interior point method for smooth convex objectives.

Solves ``min f(x)  s.t.  G x <= h,  E x = e`` where ``f`` supplies value,
gradient and Hessian.  Iterates stay strictly inside the inequalities, so
returned points satisfy them with positive slack.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, nnls

from ..errors import InfeasibleError


@dataclass
class IPMResult:
    x: np.ndarray
    value: float
    gap: float
    newton_steps: int


def strictly_feasible_point(G, h, E=None, e=None, x0=None):
    """A point with ``G x < h`` (and ``E x = e``), maximizing the normalized slack.

    Raises :class:`InfeasibleError` if the inequalities have empty interior.
    """
    G = np.atleast_2d(G)
    m, n = G.shape
    if x0 is not None and m and np.all(G @ x0 < h) and (E is None or np.allclose(E @ x0, e)):
        return np.asarray(x0, dtype=float)
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0] = 1.0
    # variables (x, s): maximize s with G x + s |G_i| <= h, s <= 1
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([G, norms[:, None]])
    A_eq = None if E is None else np.hstack([E, np.zeros((E.shape[0], 1))])
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=h, A_eq=A_eq, b_eq=e, bounds=bounds, method="highs")
    if res.status != 0 or res.x[-1] <= 1e-12:
        raise InfeasibleError("constraint set has empty interior",
                              {"lp_status": int(res.status),
                               "slack": None if res.x is None else float(res.x[-1])})
    return res.x[:n]


def minimize_barrier(fun, G, h, x0=None, E=None, e=None, gap_tol=1e-10,
                     t0=1.0, mu=10.0, max_newton=100):
    """Barrier method; ``fun(x)`` returns ``(value, grad, hess)`` and may return
    an infinite value outside its domain.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    h = np.asarray(h, dtype=float)
    m = G.shape[0]
    if E is not None:
        E = np.atleast_2d(np.asarray(E, dtype=float))
        e = np.asarray(e, dtype=float)
    x = strictly_feasible_point(G, h, E, e, x0) if m else np.asarray(x0, dtype=float)
    n = x.size
    p = 0 if E is None else E.shape[0]
    t = t0
    steps = 0

    def phi(x, t):
        s = h - G @ x
        if np.any(s <= 0):
            return math.inf
        v = fun(x)[0]
        if not math.isfinite(v):
            return math.inf
        return t * v - float(np.sum(np.log(s)))

    while True:
        for _ in range(max_newton):
            v, g, H = fun(x)
            s = h - G @ x
            inv_s = 1.0 / s
            grad = t * g + G.T @ inv_s
            hess = t * H + (G.T * inv_s ** 2) @ G
            if p:
                K = np.block([[hess, E.T], [E, np.zeros((p, p))]])
                rhs = np.concatenate([-grad, np.zeros(p)])
                dx = _solve(K, rhs)[:n]
            else:
                dx = _solve(hess, -grad)
            decrement = float(-grad @ dx)
            # relative test: phi carries roundoff of order t * |f| * eps
            if decrement / 2.0 <= 1e-10 + 1e-13 * t * (1.0 + abs(v)):
                break
            # largest step keeping strict feasibility, then Armijo backtracking
            Gd = G @ dx
            pos = Gd > 0
            step = 1.0
            if np.any(pos):
                step = min(1.0, 0.99 * float(np.min(s[pos] / Gd[pos])))
            f0 = phi(x, t)
            while step > 1e-16 and phi(x + step * dx, t) > f0 - 0.25 * step * decrement:
                step *= 0.5
            if step <= 1e-16:
                break
            x = x + step * dx
            steps += 1
        gap = m / t
        if gap <= gap_tol or m == 0:
            break
        t *= mu
    return IPMResult(x, fun(x)[0], m / t, steps)


def _solve(K, rhs):
    try:
        return np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(K, rhs, rcond=None)[0]


def metric_projection(P, theta, G, h):
    """``argmin (x - theta)' P (x - theta)  s.t.  G x <= h`` for SPD ``P``.

    With ``P = L L'`` and ``w = L'(x - theta)`` this is a least-distance
    problem, which reduces exactly to nonnegative least squares: minimize
    ``||E u - f||`` over ``u >= 0`` with ``E = [M'; r']``, ``f = e_last``,
    where ``M = G L^-T`` and ``r = h - G theta``; then ``w = -res[:-1] / res[-1]``
    for the residual ``res = E u - f``.
    """
    theta = np.asarray(theta, dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    r = np.asarray(h, dtype=float) - G @ theta
    if np.all(r >= 0):
        return theta.copy()
    L = np.linalg.cholesky(P)
    M = np.linalg.solve(L, G.T).T          # rows g_i' L^-T
    # constraints M w <= r  <=>  (-M) w >= -r
    E = np.vstack([-M.T, -r[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    u, _ = nnls(E, f, maxiter=50 * E.shape[1])
    res = E @ u - f
    if abs(res[-1]) <= 1e-14:
        raise InfeasibleError("linear constraints are inconsistent")
    w = -res[:-1] / res[-1]
    return theta + np.linalg.solve(L.T, w)
