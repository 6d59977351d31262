"""Coordinate-ascent MAP for Gaussian-prior models with chance constraints.

The model is ``theta ~ N(mu, Sigma)`` with a flat prior on ``mu`` and
``h(Sigma^-1) ~ exp(-tr(Sigma^-1 Lambda) / 2)``, and a likelihood that is
quadratic in theta: ``-theta' Q theta / 2 + q' theta + const``.  Each
constraint ``P(a' theta <= b) >= eta`` becomes
``a' mu + z_eta sqrt(a' Sigma a) <= b``.

One sweep updates
  * theta: closed-form Gaussian posterior mode,
  * mu: projection of theta onto the cone-feasible means in the
    Sigma^-1 metric (with Sigma fixed the constraints are linear in mu, so
    this is a least-distance problem solved exactly via NNLS),
  * Sigma: LogDet Bregman projection of ``Lambda + (theta - mu)(theta - mu)'``
    onto the variance bounds implied by the new mu (full mode), or the
    diagonal analogue (diagonal mode).
Every step is accepted only if the joint log posterior does not decrease.
"""
from __future__ import annotations

import math

import numpy as np

from ..bregman import (WishartHyperprior, cyclic_project, cyclic_project_diagonal,
                       trace_bound_from_constraint)
from ..constraints import ConstraintSet
from ..errors import DomainError, InfeasibleError
from ..gaussian import GaussianHyper
from ..special import std_normal_quantile
from ._ipm import metric_projection
from .result import EstimationResult

MODES = ("diagonal", "full")
# variance bounds are tightened by this factor so projected covariances
# keep the current mean strictly feasible despite rounding
_Z_SHRINK = 1.0 - 1e-9


def _logdet_and_inv(sigma, diagonal):
    if diagonal:
        return float(np.sum(np.log(sigma))), 1.0 / sigma
    L = np.linalg.cholesky(sigma)
    inv = np.linalg.inv(sigma)
    return 2.0 * float(np.sum(np.log(np.diag(L)))), 0.5 * (inv + inv.T)


def _prec_matrix(prec, diagonal):
    return np.diag(prec) if diagonal else prec


def joint_log_posterior(theta, mu, sigma, Q, q, c0, Lambda, diagonal) -> float:
    """Log of likelihood x N(theta | mu, Sigma) x Wishart-type hyperprior."""
    n = theta.size
    logdet, prec = _logdet_and_inv(sigma, diagonal)
    P = _prec_matrix(prec, diagonal)
    v = theta - mu
    loglik = -0.5 * float(theta @ Q @ theta) + float(q @ theta) + c0
    prior = -0.5 * float(v @ P @ v) - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi)
    hyper = -0.5 * float(np.sum(P * Lambda))
    return loglik + prior + hyper


def _mean_bounds(A, b, z, sigma, diagonal):
    if diagonal:
        var = (A * A) @ sigma
    else:
        var = np.einsum("ij,jk,ik->i", A, sigma, A)
    return b - z * np.sqrt(var)


def _mu_step(theta, mu, P, A, b, z, sigma, diagonal):
    """argmin (m - theta)' P (m - theta) over cone-feasible means."""
    if A.shape[0] == 0:
        return theta.copy()
    return metric_projection(P, theta, A, _mean_bounds(A, b, z, sigma, diagonal))


def _sigma_step(theta, mu, cs, Lambda, diagonal, tol):
    v = theta - mu
    tcs = []
    for pc in cs:
        tc = trace_bound_from_constraint(pc, mu)
        tc = type(tc)(tc.a, tc.z * _Z_SHRINK)
        tcs.append(tc)
    if diagonal:
        base = np.diag(Lambda) + v * v
        return cyclic_project_diagonal(base, tcs, max_sweeps=2000, tol=tol)
    base = Lambda + np.outer(v, v)
    return cyclic_project(base, tcs, max_sweeps=2000, tol=tol)


def gaussian_map(Q, q, c0, cs: ConstraintSet, prior: WishartHyperprior, mode: str = "full",
                 theta_ref=None, max_iter: int = 500, tol: float = 1e-10) -> EstimationResult:
    """Constrained MAP over (theta, mu, Sigma); see the module docstring."""
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}")
    diagonal = mode == "diagonal"
    Q = np.asarray(Q, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    cs = ConstraintSet(cs)
    if cs and cs.dim != n:
        raise DomainError("constraint dimension does not match the parameter")
    if prior.dim != n:
        raise DomainError("hyperprior dimension does not match the parameter")
    for pc in cs:
        if pc.eta <= 0.5:
            raise DomainError("MAP requires eta > 0.5 for every constraint (convex cone)")
        if pc.linear.is_degenerate:
            raise DomainError("constraint has an all-zero coefficient vector")
    A, b, eta = cs.matrix()
    if not cs:
        A, b, eta = np.zeros((0, n)), np.zeros(0), np.zeros(0)
    z = np.array([std_normal_quantile(e) for e in eta])
    Lambda = prior.Lambda

    def J(theta, mu, sigma):
        return joint_log_posterior(theta, mu, sigma, Q, q, c0, Lambda, diagonal)

    if theta_ref is None:
        theta_ref = np.linalg.lstsq(Q + 1e-12 * np.eye(n), q, rcond=None)[0]
    sigma = np.diag(Lambda).copy() if diagonal else Lambda.copy()
    mu = None
    for _ in range(40):
        prec = _logdet_and_inv(sigma, diagonal)[1]
        try:
            mu = _mu_step(theta_ref, theta_ref, _prec_matrix(prec, diagonal), A, b, z, sigma,
                          diagonal)
            break
        except InfeasibleError:
            sigma = sigma * 0.5
    if mu is None:
        raise InfeasibleError("no prior mean satisfies the chance constraints even with a "
                              "vanishing prior covariance")
    prec = _logdet_and_inv(sigma, diagonal)[1]
    P = _prec_matrix(prec, diagonal)
    theta = np.linalg.solve(Q + P, q + P @ mu)
    trace = [J(theta, mu, sigma)]
    converged = False
    it = 0
    sweeps_used = []
    for it in range(1, max_iter + 1):
        # theta
        P = _prec_matrix(_logdet_and_inv(sigma, diagonal)[1], diagonal)
        cand = np.linalg.solve(Q + P, q + P @ mu)
        if J(cand, mu, sigma) >= J(theta, mu, sigma):
            theta = cand
        # mu
        cand = _mu_step(theta, mu, P, A, b, z, sigma, diagonal)
        if J(theta, cand, sigma) >= J(theta, mu, sigma):
            mu = cand
        # Sigma
        if cs:
            proj = _sigma_step(theta, mu, cs, Lambda, diagonal, tol=1e-13)
            sweeps_used.append(proj.sweeps)
            cand = proj.sigma
        else:
            v = theta - mu
            cand = np.diag(Lambda) + v * v if diagonal else Lambda + np.outer(v, v)
        if J(theta, mu, cand) >= J(theta, mu, sigma):
            sigma = cand
        trace.append(J(theta, mu, sigma))
        if abs(trace[-1] - trace[-2]) <= tol * (1.0 + abs(trace[-1])):
            converged = True
            break
    hyper = GaussianHyper(mu, sigma)
    margins = tuple(float(bi - ai @ mu - zi * math.sqrt(hyper.quad(ai)))
                    for ai, bi, zi in zip(A, b, z))
    ok = converged and all(m >= -1e-6 for m in margins)
    return EstimationResult(theta, hyper, tuple(trace), margins, it, ok,
                            {"mode": mode, "projection_sweeps": sweeps_used})
