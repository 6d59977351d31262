"""LogDet Bregman projections of covariance matrices onto variance bounds.

The covariance step of the Gaussian MAP estimator has to keep every
``a' Sigma a`` under a bound ``z`` derived from a chance constraint.  Each
such set is convex, and the LogDet projection onto one of them is a
rank-one update of the precision matrix,
``Sigma^-1 = S0^-1 + nu a a'`` with
``nu = max(0, (a' S0 a - z) / (z a' S0 a))``.
Intersections are handled by cycling through the constraints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constraints import ProbabilisticConstraint
from .errors import DecompositionError, DomainError, InfeasibleError
from .special import std_normal_quantile

__all__ = [
    "WishartHyperprior",
    "TraceConstraint",
    "ProjectionResult",
    "logdet_divergence",
    "trace_bound_from_constraint",
    "projection_step",
    "project_single",
    "cyclic_project",
    "project_single_diagonal",
    "cyclic_project_diagonal",
]

REFRESH_EVERY = 50


def _spd(X, name="matrix") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError(f"{name} must be square")
    if not np.allclose(X, X.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(X).max())):
        raise DecompositionError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(X)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"{name} is not positive definite") from exc
    return 0.5 * (X + X.T)


@dataclass(frozen=True, eq=False)
class WishartHyperprior:
    """Scale Lambda of the prior ``h(Sigma^-1) ~ exp(-tr(Sigma^-1 Lambda) / 2)``."""

    Lambda: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Lambda", _spd(self.Lambda, "Lambda"))

    @classmethod
    def scaled_identity(cls, tau: float, n: int) -> "WishartHyperprior":
        if not tau > 0:
            raise DomainError("tau must be positive")
        return cls(tau * np.eye(n))

    @property
    def dim(self):
        return self.Lambda.shape[0]


@dataclass(frozen=True, eq=False)
class TraceConstraint:
    """``tr(Sigma a a') = a' Sigma a <= z``."""

    a: np.ndarray
    z: float

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        if not np.any(a):
            raise DomainError("trace constraint needs a nonzero direction")
        if not self.z > 0:
            raise DomainError("trace bound z must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "z", float(self.z))

    def violation(self, sigma) -> float:
        if sigma.ndim == 1:
            return float(np.sum(sigma * self.a ** 2)) - self.z
        return float(self.a @ sigma @ self.a) - self.z


def logdet_divergence(X, Y) -> float:
    """``tr(X Y^-1) - log det(X Y^-1) - n`` for SPD X, Y."""
    X = _spd(X, "X")
    Y = _spd(Y, "Y")
    if X.shape != Y.shape:
        raise DomainError("X and Y must have the same shape")
    Ly = np.linalg.cholesky(Y)
    Lx = np.linalg.cholesky(X)
    # tr(X Y^-1) = ||Ly^-1 Lx||_F^2
    M = np.linalg.solve(Ly, Lx)
    tr = float(np.sum(M * M))
    logdet = 2.0 * float(np.sum(np.log(np.diag(Lx))) - np.sum(np.log(np.diag(Ly))))
    return max(0.0, tr - logdet - X.shape[0])


def trace_bound_from_constraint(pc: ProbabilisticConstraint, mu) -> TraceConstraint:
    """Variance bound on ``a @ theta`` that makes ``pc`` hold at mean ``mu``."""
    if pc.eta <= 0.5:
        raise DomainError("variance bounds need eta > 0.5 (convex side of the cone)")
    gap = pc.b - float(pc.a @ np.asarray(mu, dtype=float))
    if not gap > 0:
        raise InfeasibleError(
            f"a @ mu = {pc.b - gap:.6g} does not lie below b = {pc.b:.6g}; "
            "no covariance satisfies the constraint at this mean",
            {"gap": gap})
    return TraceConstraint(pc.a, (gap / std_normal_quantile(pc.eta)) ** 2)


def projection_step(sigma: np.ndarray, tc: TraceConstraint):
    """Multiplier nu and projected covariance (no input validation)."""
    sa = sigma @ tc.a
    q = float(tc.a @ sa)
    if q <= tc.z:
        return 0.0, sigma
    nu = (q - tc.z) / (tc.z * q)
    # Sherman-Morrison on (Sigma^-1 + nu a a')^-1
    out = sigma - (nu / (1.0 + nu * q)) * np.outer(sa, sa)
    return nu, 0.5 * (out + out.T)


def project_single(base, tc: TraceConstraint) -> np.ndarray:
    """LogDet projection of ``base`` onto ``{Sigma : a' Sigma a <= z}``."""
    base = _spd(base, "base")
    return projection_step(base, tc)[1]


@dataclass
class ProjectionResult:
    sigma: np.ndarray
    sweeps: int
    converged: bool
    max_violation: float
    violation_trace: list = field(default_factory=list)
    remaining: list = field(default_factory=list)


def cyclic_project(base, tcs, max_sweeps: int = 500, tol: float = 1e-10) -> ProjectionResult:
    """Project onto each constraint in turn until a full sweep is within ``tol``.

    The precision matrix is accumulated alongside and re-inverted every
    ``REFRESH_EVERY`` sweeps to stop drift in the rank-one updates.
    """
    sigma = _spd(base, "base")
    tcs = list(tcs)
    if not tcs:
        return ProjectionResult(sigma, 0, True, -math.inf)
    precision = np.linalg.inv(sigma)
    trace = []
    sweeps = 0
    worst = max(tc.violation(sigma) for tc in tcs)
    while worst > tol and sweeps < max_sweeps:
        for tc in tcs:
            nu, sigma = projection_step(sigma, tc)
            if nu:
                precision += nu * np.outer(tc.a, tc.a)
        sweeps += 1
        if sweeps % REFRESH_EVERY == 0:
            precision = 0.5 * (precision + precision.T)
            sigma = np.linalg.inv(precision)
            sigma = 0.5 * (sigma + sigma.T)
        worst = max(tc.violation(sigma) for tc in tcs)
        trace.append(worst)
    remaining = [i for i, tc in enumerate(tcs) if tc.violation(sigma) > tol]
    return ProjectionResult(sigma, sweeps, worst <= tol, worst, trace, remaining)


def project_single_diagonal(base, tc: TraceConstraint) -> np.ndarray:
    """LogDet projection restricted to diagonal covariances.

    With ``d = a**2`` the solution is ``1/sigma_k = 1/s_k + nu d_k`` where
    ``nu`` solves ``sum d_k / (1/s_k + nu d_k) = z``; for a single nonzero
    coordinate this is plain clipping ``sigma_i = min(s_i, z / a_i**2)``.
    """
    s = np.asarray(base, dtype=float)
    if s.ndim != 1 or np.any(s <= 0):
        raise DecompositionError("diagonal base must have positive entries")
    d = tc.a ** 2
    if float(d @ s) <= tc.z:
        return s.copy()
    nz = d > 0
    if np.count_nonzero(nz) == 1:
        out = s.copy()
        out[nz] = tc.z / d[nz]
        return out
    inv = 1.0 / s

    def excess(nu):
        return float(np.sum(d / (inv + nu * d))) - tc.z

    lo, hi = 0.0, 1.0
    while excess(hi) > 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 1.0 / (inv + hi * d)


def cyclic_project_diagonal(base, tcs, max_sweeps: int = 500,
                            tol: float = 1e-10) -> ProjectionResult:
    sigma = np.asarray(base, dtype=float).copy()
    tcs = list(tcs)
    if not tcs:
        return ProjectionResult(sigma, 0, True, -math.inf)
    trace = []
    sweeps = 0
    worst = max(tc.violation(sigma) for tc in tcs)
    while worst > tol and sweeps < max_sweeps:
        for tc in tcs:
            sigma = project_single_diagonal(sigma, tc)
        sweeps += 1
        worst = max(tc.violation(sigma) for tc in tcs)
        trace.append(worst)
    remaining = [i for i, tc in enumerate(tcs) if tc.violation(sigma) > tol]
    return ProjectionResult(sigma, sweeps, worst <= tol, worst, trace, remaining)
