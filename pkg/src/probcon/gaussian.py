"""Half-space probabilities under a Gaussian prior.

For theta ~ N(mu, Sigma), ``a @ theta`` is N(a @ mu, a' Sigma a), so
``P(a @ theta <= b) >= eta`` is equivalent to the second-order-cone
condition ``a @ mu + z_eta * sqrt(a' Sigma a) <= b`` with
``z_eta = Phi^-1(eta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet, LinearConstraint, ProbabilisticConstraint
from .errors import DecompositionError, DegenerateError, DomainError
from .special import as_generator, cholesky_spd, std_normal_cdf, std_normal_quantile

__all__ = [
    "GaussianHyper",
    "soc_margin",
    "prob_leq",
    "prob_leq_montecarlo",
    "in_feasible_set",
    "FeasibilityReport",
]


@dataclass(frozen=True, eq=False)
class GaussianHyper:
    """Mean and covariance; a 1-d ``sigma`` is read as a diagonal."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if mu.ndim != 1:
            raise DomainError("mu must be a vector")
        if sigma.ndim == 1:
            if sigma.shape != mu.shape:
                raise DomainError("diagonal sigma must match mu")
            if not np.all(sigma > 0):
                raise DecompositionError("diagonal covariance entries must be positive")
        elif sigma.ndim == 2:
            if sigma.shape != (mu.size, mu.size):
                raise DomainError("sigma must be n x n")
            if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
                raise DecompositionError("sigma is not symmetric")
            if np.linalg.eigvalsh(sigma)[0] <= 0:
                raise DecompositionError("sigma is not positive definite")
        else:
            raise DomainError("sigma must be a vector or a matrix")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.mu.size

    @property
    def is_diagonal(self):
        return self.sigma.ndim == 1

    def covariance(self) -> np.ndarray:
        return np.diag(self.sigma) if self.is_diagonal else self.sigma

    def quad(self, a) -> float:
        """a' Sigma a."""
        if self.is_diagonal:
            return float(np.sum(self.sigma * a * a))
        return float(a @ self.sigma @ a)


def _mean_sd(h: GaussianHyper, c: LinearConstraint):
    if c.a.shape != h.mu.shape:
        raise DomainError(f"dimension mismatch: a {c.a.shape}, mu {h.mu.shape}")
    if c.is_degenerate:
        raise DegenerateError("constraint has an all-zero coefficient vector")
    return float(c.a @ h.mu), math.sqrt(h.quad(c.a))


def soc_margin(h: GaussianHyper, pc: ProbabilisticConstraint) -> float:
    """``b - a @ mu - Phi^-1(eta) * sqrt(a' Sigma a)``; nonnegative iff feasible."""
    m, sd = _mean_sd(h, pc.linear)
    return pc.b - m - std_normal_quantile(pc.eta) * sd


def prob_leq(h: GaussianHyper, c: LinearConstraint) -> float:
    if isinstance(c, ProbabilisticConstraint):
        c = c.linear
    m, sd = _mean_sd(h, c)
    return std_normal_cdf((c.b - m) / sd)


def prob_leq_montecarlo(h: GaussianHyper, c: LinearConstraint, n_samples: int, rng,
                        batch: int = 200_000):
    """Monte Carlo estimate of ``P(a @ theta <= b)``; returns (estimate, std_err)."""
    if isinstance(c, ProbabilisticConstraint):
        c = c.linear
    _mean_sd(h, c)
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    gen = as_generator(rng)
    L = cholesky_spd(h.covariance())
    hits = 0
    left = int(n_samples)
    while left > 0:
        m = min(left, batch)
        theta = h.mu + gen.standard_normal((m, h.dim)) @ L.T
        hits += int(np.count_nonzero(theta @ c.a <= c.b))
        left -= m
    p = hits / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


@dataclass(frozen=True)
class FeasibilityReport:
    margins: tuple
    members: tuple
    feasible: bool

    def __bool__(self):
        return self.feasible


def in_feasible_set(h: GaussianHyper, constraints) -> FeasibilityReport:
    """Per-constraint SOC margins and their conjunction (closed sets)."""
    if isinstance(constraints, ProbabilisticConstraint):
        constraints = [constraints]
    cs = ConstraintSet(constraints)
    margins = tuple(soc_margin(h, pc) for pc in cs)
    members = tuple(m >= 0.0 for m in margins)
    return FeasibilityReport(margins, members, all(members))
