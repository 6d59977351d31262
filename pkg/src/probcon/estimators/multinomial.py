"""Multinomial estimators: MLE, hard-constrained MLE, and Dirichlet MAP / EB
under probabilistic constraints on the Dirichlet hyperparameter.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, gammaln

from ..constraints import ConstraintSet, LinearConstraint
from ..dirichlet import DirichletHyper, edgeworth_probs, exact_probs, prob_leq
from ..errors import DomainError, InfeasibleError
from ..special import RngHandle
from ._ipm import minimize_barrier
from .result import EstimationResult

DEFAULT_ALPHA_BOX = (0.5, 50.0)
THETA_FLOOR = 1e-8
# target slightly inside the feasible set so penalized solutions land feasible
_PENALTY_MARGIN = 1e-6
_RESTORE_MARGIN = 1e-3
_N_PROBES = 256


def _counts(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=float)
    if c.ndim != 1 or np.any(c < 0) or not np.all(np.isfinite(c)):
        raise DomainError("counts must be a vector of nonnegative numbers")
    return c


def mle_multinomial(counts) -> np.ndarray:
    c = _counts(counts)
    total = c.sum()
    if total <= 0:
        raise DomainError("MLE needs at least one observation")
    return c / total


def multinomial_loglik(theta, counts) -> float:
    """sum c_i log theta_i, with 0 log 0 = 0."""
    c = _counts(counts)
    theta = np.asarray(theta, dtype=float)
    pos = c > 0
    if np.any(theta[pos] <= 0):
        return -math.inf
    return float(c[pos] @ np.log(theta[pos]))


def constrained_mle_multinomial(counts, hard: Sequence[LinearConstraint],
                                gap_tol: float = 1e-10) -> np.ndarray:
    """Maximize the multinomial likelihood over simplex ∩ hard constraints.

    Solved with a log-barrier method, so the result satisfies every
    constraint (and positivity) with strictly positive slack.
    """
    c = _counts(counts)
    if c.sum() <= 0:
        raise DomainError("constrained MLE needs at least one observation")
    hard = list(hard)
    n = c.size
    if not hard:
        return mle_multinomial(c)
    A = np.vstack([h.a for h in hard])
    if A.shape[1] != n:
        raise DomainError("constraint dimension does not match the counts")
    b = np.array([h.b for h in hard])
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    pos = c > 0

    def fun(x):
        if np.any(x[pos] <= 0):
            return math.inf, None, None
        v = -float(c[pos] @ np.log(x[pos]))
        g = np.zeros(n)
        g[pos] = -c[pos] / x[pos]
        H = np.zeros(n)
        H[pos] = c[pos] / x[pos] ** 2
        return v, g, np.diag(H)

    try:
        res = minimize_barrier(fun, G, h, x0=np.full(n, 1.0 / n),
                               E=np.ones((1, n)), e=np.ones(1), gap_tol=gap_tol)
    except InfeasibleError as exc:
        raise InfeasibleError("simplex and hard constraints have no common interior point",
                              exc.diagnostics) from None
    return res.x


# -- Dirichlet machinery -----------------------------------------------------------

def log_dirichlet_density(theta, alpha) -> float:
    theta = np.asarray(theta, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum() + (alpha - 1.0) @ np.log(theta))


def polya_loglik(alpha, replicates) -> float:
    """Dirichlet-multinomial log-likelihood of count vectors (sequence form)."""
    alpha = np.asarray(alpha, dtype=float)
    R = np.atleast_2d(np.asarray(replicates, dtype=float))
    s = alpha.sum()
    N = R.sum(axis=1)
    return float(np.sum(gammaln(s) - gammaln(s + N))
                 + np.sum(gammaln(alpha + R) - gammaln(alpha)))


def _polya_grad(alpha, R):
    s = alpha.sum()
    N = R.sum(axis=1)
    common = np.sum(digamma(s) - digamma(s + N))
    return common + np.sum(digamma(alpha + R) - digamma(alpha), axis=0)


class _Feasibility:
    """Prior mass of every constraint as a function of alpha."""

    def __init__(self, cs: ConstraintSet, method: str):
        self.cs = cs
        self.method = method
        if cs:
            A, b, eta = cs.matrix()
            self.D = A - b[:, None]
            self.eta = eta
        else:
            self.D = np.zeros((0, 0))
            self.eta = np.zeros(0)

    def probs(self, alpha, method=None) -> np.ndarray:
        method = method or self.method
        if not self.cs:
            return np.zeros(0)
        if method == "edgeworth1":
            return edgeworth_probs(self.D, alpha, 1)
        if method == "edgeworth2":
            return edgeworth_probs(self.D, alpha, 2)
        if method == "exact":
            return exact_probs(self.D, alpha)
        if np.ndim(alpha) == 2:
            return np.array([self.probs(a, method) for a in alpha])
        hyper = DirichletHyper(alpha)
        return np.array([prob_leq(hyper, pc.linear, method) for pc in self.cs])

    def margins(self, alpha, method=None) -> np.ndarray:
        return self.probs(alpha, method) - self.eta

    def feasible(self, alpha) -> bool:
        return bool(np.all(self.margins(alpha) >= 0.0))

    def violation(self, alpha, margin=_PENALTY_MARGIN):
        """Squared shortfall below ``eta + margin``; vectorized over stacked alphas."""
        if not self.cs:
            return 0.0 if np.ndim(alpha) == 1 else np.zeros(len(alpha))
        short = np.maximum(0.0, self.eta + margin - self.probs(alpha))
        return np.sum(short * short, axis=-1)

    def violation_grad(self, alpha, margin=_PENALTY_MARGIN) -> np.ndarray:
        """Central differences with step 1e-4 * (1 + |alpha_i|)."""
        if not self.cs:
            return np.zeros_like(alpha)
        n = alpha.size
        h = 1e-4 * (1.0 + np.abs(alpha))
        up = alpha + np.diag(h)
        dn = alpha - np.diag(np.minimum(h, alpha - 1e-12))
        v = self.violation(np.vstack([up, dn]), margin)
        return (v[:n] - v[n:]) / (np.diag(up) - np.diag(dn))


def _restore(alpha, feas: _Feasibility, box, margin):
    """Nearby feasible point: minimize the shortfall starting at ``alpha``."""
    lo, hi = box
    res = minimize(feas.violation, alpha, args=(margin,), jac=feas.violation_grad,
                   method="L-BFGS-B", bounds=[(lo, hi)] * alpha.size,
                   options={"maxiter": 1000, "ftol": 1e-16, "gtol": 0.0})
    return np.clip(res.x, lo, hi)


def _alpha_ascent(objective, grad, alpha0, feas: _Feasibility, box, rho):
    """One penalized ascent from a feasible ``alpha0``, then a safeguarded move.

    The candidate maximizes ``objective - rho * violation`` over the box,
    doubling ``rho`` (warm-started) while the candidate is infeasible, and
    is then pulled back into the feasible set if needed.  If that does not
    yield a feasible improvement, the step from ``alpha0`` is halved until
    it does.  Iterates therefore stay feasible and the objective never
    decreases.  Returns ``(alpha, rho)``.
    """
    lo, hi = box
    bounds = [(lo, hi)] * alpha0.size
    f0 = objective(alpha0)
    cand = alpha0
    for _ in range(30):
        def neg(a, rho=rho):
            return -(objective(a) - rho * feas.violation(a))

        def neg_grad(a, rho=rho):
            return -(grad(a) - rho * feas.violation_grad(a))

        res = minimize(neg, cand, jac=neg_grad, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 500, "ftol": 1e-13, "gtol": 1e-9})
        if np.all(np.isfinite(res.x)) and res.fun <= neg(cand):
            cand = np.clip(res.x, lo, hi)
        if not feas.cs or feas.feasible(cand):
            break
        rho *= 2.0
    if feas.cs and not feas.feasible(cand):
        cand = _restore(cand, feas, box, 10 * _PENALTY_MARGIN)
    if (not feas.cs or feas.feasible(cand)) and objective(cand) >= f0:
        return cand, rho
    step = cand - alpha0
    t = 0.5
    for _ in range(50):
        trial = alpha0 + t * step
        if feas.feasible(trial) and objective(trial) >= f0:
            return trial, rho
        t *= 0.5
    return alpha0, rho


def _initial_alpha(objective, feas: _Feasibility, box, alpha_init, seed):
    lo, hi = box
    n = feas.D.shape[1] if feas.cs else None
    candidates = []
    if alpha_init is not None:
        candidates.append(np.clip(np.asarray(alpha_init, dtype=float), lo, hi))
    if n is None:
        return candidates[0] if candidates else None
    candidates.append(np.full(n, min(max(1.0, lo), hi)))
    gen = RngHandle(seed).generator()
    candidates.extend(np.exp(gen.uniform(math.log(lo), math.log(hi), size=(_N_PROBES, n))))
    feasible = [a for a in candidates if feas.feasible(a)]
    if feasible:
        return max(feasible, key=objective)
    viol = feas.violation(np.array(candidates))
    ranked = [candidates[i] for i in np.argsort(viol, kind="stable")[:5]]
    for a in ranked:
        # aim well inside the set; a squared shortfall of 1e-12 stalls L-BFGS-B
        res = minimize(feas.violation, a, args=(_RESTORE_MARGIN,), jac=feas.violation_grad,
                       method="L-BFGS-B", bounds=[(lo, hi)] * n,
                       options={"maxiter": 1000, "ftol": 1e-16, "gtol": 0.0})
        if feas.feasible(res.x):
            return res.x
    best = ranked[0]
    raise InfeasibleError(
        "no hyperparameter in the box satisfies all probabilistic constraints",
        {"best_alpha": best.tolist(), "margins": feas.margins(best).tolist()})


def _check_box(box):
    lo, hi = map(float, box)
    if not (0 < lo <= hi < math.inf):
        raise DomainError("alpha box must satisfy 0 < lo <= hi < inf")
    return lo, hi


def _theta_step(counts, alpha, floor):
    raw = counts + alpha - 1.0
    theta = np.maximum(raw, 0.0)
    if theta.sum() <= 0:
        theta = np.ones_like(theta)
    theta = np.maximum(theta / theta.sum(), floor)
    return theta / theta.sum()


def map_dirichlet_multinomial(counts, cs: ConstraintSet = ConstraintSet(),
                              alpha_box=DEFAULT_ALPHA_BOX, method: str = "edgeworth2",
                              alpha_init=None, fixed_alpha=None, max_iter: int = 200,
                              tol: float = 1e-9, floor: float = THETA_FLOOR, seed: int = 0,
                              verify_exact: bool = False) -> EstimationResult:
    """Joint posterior mode of (theta, alpha) with alpha restricted to the
    feasible set of ``cs`` inside a uniform-hyperprior box.

    Alternates a closed-form theta step (mode of Dir(c + alpha)) and a
    penalized, safeguarded ascent on ``log Dir(theta | alpha)``.
    """
    c = _counts(counts)
    if c.sum() <= 0:
        raise DomainError("MAP needs at least one observation")
    cs = ConstraintSet(cs)
    if cs and cs.dim != c.size:
        raise DomainError("constraint dimension does not match the counts")
    box = _check_box(alpha_box)
    feas = _Feasibility(cs, method)

    def joint(theta, alpha):
        return multinomial_loglik(theta, c) + log_dirichlet_density(theta, alpha)

    if fixed_alpha is not None:
        alpha = np.asarray(fixed_alpha, dtype=float)
        theta = _theta_step(c, alpha, floor)
        margins = tuple(feas.margins(alpha).tolist())
        return EstimationResult(theta, DirichletHyper(alpha), (joint(theta, alpha),),
                                margins, 1, bool(np.all(np.array(margins) >= 0)))

    def profile(a):
        # the joint is not concave in (theta, alpha); rank starts by max over theta
        return joint(_theta_step(c, a, floor), a)

    alpha = _initial_alpha(profile, feas, box, alpha_init, seed)
    if alpha is None:
        alpha = np.full(c.size, min(max(1.0, box[0]), box[1]))
    theta = _theta_step(c, alpha, floor)
    trace = [joint(theta, alpha)]
    rho = 1e3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        cand = _theta_step(c, alpha, floor)
        if joint(cand, alpha) >= joint(theta, alpha):
            theta = cand
        log_theta = np.log(theta)

        def obj(a, lt=log_theta):
            return float(gammaln(a.sum()) - gammaln(a).sum() + (a - 1.0) @ lt)

        def grad(a, lt=log_theta):
            return digamma(a.sum()) - digamma(a) + lt

        alpha, rho = _alpha_ascent(obj, grad, alpha, feas, box, rho)
        trace.append(joint(theta, alpha))
        if abs(trace[-1] - trace[-2]) <= tol * (1.0 + abs(trace[-1])):
            converged = True
            break
    margins = feas.margins(alpha)
    info = {"rho": rho, "method": method}
    if verify_exact and cs:
        info["exact_margins"] = feas.margins(alpha, "exact").tolist()
    return EstimationResult(theta, DirichletHyper(alpha), tuple(trace), tuple(margins.tolist()),
                            it, converged and bool(np.all(margins >= -1e-6)), info)


def eb_dirichlet_multinomial(replicates, cs: ConstraintSet = ConstraintSet(),
                             alpha_box=DEFAULT_ALPHA_BOX, method: str = "edgeworth2",
                             alpha_init=None, max_iter: int = 50, tol: float = 1e-10,
                             seed: int = 0, verify_exact: bool = False) -> EstimationResult:
    """Empirical Bayes: maximize the summed Polya likelihood over feasible alpha.

    ``theta`` in the result is the posterior predictive mean for the pooled
    counts, ``(c + alpha) / sum(c + alpha)``.
    """
    R = np.atleast_2d(np.asarray(replicates, dtype=float))
    if R.shape[0] < 1 or np.any(R < 0):
        raise DomainError("EB needs at least one replicate of nonnegative counts")
    cs = ConstraintSet(cs)
    n = R.shape[1]
    if cs and cs.dim != n:
        raise DomainError("constraint dimension does not match the counts")
    box = _check_box(alpha_box)
    feas = _Feasibility(cs, method)

    def obj(a):
        return polya_loglik(a, R)

    def grad(a):
        return _polya_grad(a, R)

    alpha = _initial_alpha(obj, feas, box, alpha_init, seed)
    if alpha is None:
        alpha = np.full(n, min(max(1.0, box[0]), box[1]))
    trace = [obj(alpha)]
    rho = 1e3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        alpha, rho = _alpha_ascent(obj, grad, alpha, feas, box, rho)
        trace.append(obj(alpha))
        if abs(trace[-1] - trace[-2]) <= tol * (1.0 + abs(trace[-1])):
            converged = True
            break
    pooled = R.sum(axis=0) + alpha
    margins = feas.margins(alpha)
    info = {"rho": rho, "method": method}
    if verify_exact and cs:
        info["exact_margins"] = feas.margins(alpha, "exact").tolist()
    return EstimationResult(pooled / pooled.sum(), DirichletHyper(alpha), tuple(trace),
                            tuple(margins.tolist()), it,
                            converged and bool(np.all(margins >= -1e-6)), info)
