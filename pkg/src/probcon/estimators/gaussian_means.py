"""Estimators for the means of independent unit-variance Gaussian groups."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bregman import WishartHyperprior
from ..constraints import ConstraintSet
from ..errors import DomainError
from ._ipm import minimize_barrier
from .gaussian_map import gaussian_map
from .result import EstimationResult

__all__ = [
    "GaussianMeansData",
    "mle_gaussian_means",
    "constrained_mle_gaussian_means",
    "map_gaussian_means",
    "gaussian_means_nll",
]


@dataclass(frozen=True, eq=False)
class GaussianMeansData:
    """One sample sequence per group; each group is N(theta_j, 1)."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=float).ravel() for g in self.groups)
        if not groups:
            raise DomainError("need at least one group")
        if any(g.size == 0 for g in groups):
            raise DomainError("every group must be nonempty")
        if any(not np.all(np.isfinite(g)) for g in groups):
            raise DomainError("samples must be finite")
        object.__setattr__(self, "groups", groups)

    @property
    def dim(self):
        return len(self.groups)

    @property
    def sizes(self):
        return np.array([g.size for g in self.groups], dtype=float)

    @property
    def means(self):
        return np.array([g.mean() for g in self.groups])

    def quadratic(self):
        """(Q, q, c0) with log-likelihood -theta'Q theta/2 + q'theta + c0."""
        n = self.sizes
        c0 = -0.5 * sum(float(g @ g) for g in self.groups) - 0.5 * n.sum() * math.log(2 * math.pi)
        return np.diag(n), n * self.means, c0


def mle_gaussian_means(d: GaussianMeansData) -> np.ndarray:
    return d.means


def constrained_mle_gaussian_means(d: GaussianMeansData, hard) -> np.ndarray:
    """Weighted projection of the sample means onto ``{A theta <= b}``."""
    hard = list(hard)
    xbar = d.means
    if not hard:
        return xbar
    A = np.array([c.a for c in hard])
    b = np.array([c.b for c in hard])
    if A.shape[1] != d.dim:
        raise DomainError("constraint dimension does not match the number of groups")
    n = d.sizes
    if np.all(A @ xbar <= b):
        return xbar
    H = np.diag(n)

    def fun(t):
        r = t - xbar
        return 0.5 * float(r @ (n * r)), n * r, H

    return minimize_barrier(fun, A, b, gap_tol=1e-12).x


def map_gaussian_means(d: GaussianMeansData, cs: ConstraintSet, prior: WishartHyperprior,
                       mode: str = "full", **kw) -> EstimationResult:
    Q, q, c0 = d.quadratic()
    return gaussian_map(Q, q, c0, cs, prior, mode=mode, theta_ref=d.means, **kw)


def gaussian_means_nll(theta, groups) -> float:
    """Mean negative log-likelihood of held-out samples under N(theta_j, 1)."""
    total, count = 0.0, 0
    for t, g in zip(theta, groups):
        g = np.asarray(g, dtype=float)
        total += 0.5 * float(np.sum((g - t) ** 2)) + 0.5 * g.size * math.log(2 * math.pi)
        count += g.size
    return total / count
