"""Linear regression: ridge, hard-constrained ridge and chance-constrained MAP.

Hyperparameters (ridge weight, noise variance, prior scale) are picked on a
held-out tail of the training rows; ties go to the smallest value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bregman import WishartHyperprior
from ..constraints import ConstraintSet
from ..errors import DecompositionError, DomainError
from ._ipm import minimize_barrier
from .gaussian_map import gaussian_map
from .result import EstimationResult

__all__ = [
    "RegressionData",
    "RIDGE_GRID",
    "SIGMA2_GRID",
    "TAU_GRID",
    "HOLDOUT_FRACTION",
    "ridge_regression",
    "constrained_ridge",
    "map_regression",
    "holdout_split",
    "select_ridge",
    "select_map",
    "mse",
    "rounded_accuracy",
]

RIDGE_GRID = (0.001, 0.01, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0)
SIGMA2_GRID = (0.5, 1.0, 2.0)
TAU_GRID = (0.01, 0.05, 0.1, 0.2, 0.3)
HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True, eq=False)
class RegressionData:
    X: np.ndarray
    y: np.ndarray
    sigma2: float = 1.0

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] < 1:
            raise DomainError("need at least one observation")
        if X.shape[0] != y.size:
            raise DomainError("X and y disagree on the number of rows")
        if not self.sigma2 > 0:
            raise DomainError("noise variance must be positive")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def dim(self):
        return self.X.shape[1]

    def with_sigma2(self, sigma2) -> "RegressionData":
        return RegressionData(self.X, self.y, sigma2)

    def rows(self, idx) -> "RegressionData":
        return RegressionData(self.X[idx], self.y[idx], self.sigma2)


def ridge_regression(d: RegressionData, ridge: float) -> np.ndarray:
    """``(X'X + ridge * sigma2 * I)^-1 X'y``."""
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    G = d.X.T @ d.X + ridge * d.sigma2 * np.eye(d.dim)
    if ridge == 0 and np.linalg.matrix_rank(d.X) < d.dim:
        raise DecompositionError("design matrix is rank deficient; use a positive ridge")
    return np.linalg.solve(G, d.X.T @ d.y)


def constrained_ridge(d: RegressionData, ridge: float, hard) -> np.ndarray:
    """Ridge objective minimized over ``{A theta <= b}``."""
    hard = list(hard)
    theta = ridge_regression(d, ridge)
    if not hard:
        return theta
    A = np.array([c.a for c in hard])
    b = np.array([c.b for c in hard])
    if A.shape[1] != d.dim:
        raise DomainError("constraint dimension does not match the design")
    if np.all(A @ theta <= b):
        return theta
    H = d.X.T @ d.X + ridge * d.sigma2 * np.eye(d.dim)
    g0 = d.X.T @ d.y

    def fun(t):
        Ht = H @ t
        return 0.5 * float(t @ Ht) - float(g0 @ t), Ht - g0, H

    return minimize_barrier(fun, A, b, gap_tol=1e-12).x


def map_regression(d: RegressionData, cs: ConstraintSet, prior: WishartHyperprior,
                   mode: str = "full", **kw) -> EstimationResult:
    """Chance-constrained MAP with the Gaussian likelihood ``N(theta'x, sigma2)``."""
    Q = d.X.T @ d.X / d.sigma2
    q = d.X.T @ d.y / d.sigma2
    m = d.y.size
    c0 = -0.5 * float(d.y @ d.y) / d.sigma2 - 0.5 * m * math.log(2 * math.pi * d.sigma2)
    ref = np.linalg.lstsq(d.X.T @ d.X + 1e-8 * np.eye(d.dim), d.X.T @ d.y, rcond=None)[0]
    res = gaussian_map(Q, q, c0, cs, prior, mode=mode, theta_ref=ref, **kw)
    info = dict(res.info, sigma2=d.sigma2)
    return EstimationResult(res.theta, res.hyper, res.objective_trace, res.feasibility,
                            res.iterations, res.converged, info)


def mse(theta, X, y) -> float:
    r = np.asarray(y, dtype=float) - np.asarray(X, dtype=float) @ theta
    return float(np.mean(r * r))


def rounded_accuracy(theta, X, y) -> float:
    """Share of predictions that round to the observed integer level."""
    pred = np.rint(np.asarray(X, dtype=float) @ theta)
    return float(np.mean(pred == np.rint(y)))


def holdout_split(m: int, fraction: float = HOLDOUT_FRACTION, folds: int = 1):
    """(fit, score) index pairs.

    ``folds=1`` holds out the trailing ``ceil(fraction * m)`` rows once;
    ``folds=k`` rotates the held-out block through ``k`` contiguous folds.
    """
    if folds < 1:
        raise DomainError("folds must be >= 1")
    if folds == 1:
        k = max(1, math.ceil(fraction * m))
        if k >= m:
            raise DomainError("too few rows for a held-out split")
        return [(np.arange(m - k), np.arange(m - k, m))]
    if folds > m:
        raise DomainError("more folds than rows")
    idx = np.arange(m)
    return [(np.setdiff1d(idx, f), f) for f in np.array_split(idx, folds)]


def _score(d, fit, key, splits):
    total = 0.0
    for fit_idx, val_idx in splits:
        theta = fit(d.rows(fit_idx), key)
        total += mse(theta, d.X[val_idx], d.y[val_idx])
    return total / len(splits)


def _pick(scores):
    # scores are in ascending hyperparameter order; strict < keeps the smallest on ties
    best = None
    for key, s in scores:
        if best is None or s < best[1]:
            best = (key, s)
    return best[0]


def select_ridge(d: RegressionData, grid=RIDGE_GRID, hard=None, folds: int = 1):
    """Held-out choice of the ridge weight, then a refit on all rows.

    Returns ``(theta, ridge)``.  With ``hard`` constraints both the scoring
    fits and the refit are hard-constrained.
    """
    splits = holdout_split(d.y.size, folds=folds)

    def fit(data, lam):
        return ridge_regression(data, lam) if hard is None else constrained_ridge(data, lam, hard)

    lam = _pick([(lam, _score(d, fit, lam, splits)) for lam in sorted(grid)])
    return fit(d, lam), lam


def select_map(d: RegressionData, cs: ConstraintSet, mode: str = "full",
               sigma2_grid=SIGMA2_GRID, tau_grid=TAU_GRID, folds: int = 1, **kw):
    """Held-out choice of ``(sigma2, tau)`` with ``Lambda = tau I``; returns the
    refit :class:`EstimationResult` (chosen values in ``info``)."""
    splits = holdout_split(d.y.size, folds=folds)

    def fit(data, key):
        s2, tau = key
        prior = WishartHyperprior.scaled_identity(tau, d.dim)
        return map_regression(data.with_sigma2(s2), cs, prior, mode, **kw).theta

    keys = [(s2, tau) for s2 in sorted(sigma2_grid) for tau in sorted(tau_grid)]
    s2, tau = _pick([(k, _score(d, fit, k, splits)) for k in keys])
    res = map_regression(d.with_sigma2(s2), cs, WishartHyperprior.scaled_identity(tau, d.dim),
                         mode, **kw)
    info = dict(res.info, tau=tau)
    return EstimationResult(res.theta, res.hyper, res.objective_trace, res.feasibility,
                            res.iterations, res.converged, info)
