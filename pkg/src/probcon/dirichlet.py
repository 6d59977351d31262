"""Prior mass of a half-space under a Dirichlet distribution.

If theta ~ Dir(alpha) and Y_j ~ Gamma(alpha_j) independently, then
``a @ theta <= b`` holds exactly when ``sum_j (a_j - b) Y_j <= 0``.  Merging
equal coefficients ``lambda_k = a_j - b`` gives a weighted sum of
chi-squared variables ``T_k`` with ``r_k = 2 * sum alpha_j`` degrees of
freedom (scaled by 1/2, which does not change the sign).  The probability
of that event is computed here three ways: an Edgeworth expansion, a
Gil-Pelaez style inversion integral, and Monte Carlo.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, ndtr

from . import kernels
from .constraints import LinearConstraint, ProbabilisticConstraint
from .errors import DegenerateError, DomainError, IntegrationError
from .special import (QuadratureConfig, as_generator, hermite, std_normal_cdf,
                      std_normal_pdf)

__all__ = [
    "DirichletHyper",
    "GroupedCoefficients",
    "CumulantVector",
    "group_coefficients",
    "cumulants",
    "prob_leq_edgeworth",
    "prob_leq_exact",
    "prob_leq_montecarlo",
    "prob_leq",
    "in_feasible_set",
    "truncation_point",
    "edgeworth_probs",
    "exact_probs",
    "METHODS",
]

METHODS = ("edgeworth1", "edgeworth2", "exact")

# a_j - b values closer than this (relative to max |a_j - b|) are merged
_MERGE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class DirichletHyper:
    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 1 or alpha.size == 0:
            raise DomainError("alpha must be a nonempty vector")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise DomainError("alpha entries must be positive and finite")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self):
        return self.alpha.size

    def mean(self):
        return self.alpha / self.alpha.sum()


@dataclass(frozen=True)
class GroupedCoefficients:
    lambdas: np.ndarray
    dofs: np.ndarray

    def __len__(self):
        return len(self.lambdas)


@dataclass(frozen=True)
class CumulantVector:
    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float

    def standardized(self):
        """(mean/sd, skewness, excess kurtosis)."""
        sd = math.sqrt(self.kappa2)
        return (self.kappa1 / sd, self.kappa3 / sd ** 3, self.kappa4 / self.kappa2 ** 2)

    def as_tuple(self):
        return (self.kappa1, self.kappa2, self.kappa3, self.kappa4)


def _as_hyper(hyper) -> DirichletHyper:
    return hyper if isinstance(hyper, DirichletHyper) else DirichletHyper(hyper)


def group_coefficients(a, b: float, hyper) -> GroupedCoefficients:
    """Distinct nonzero values of ``a_j - b`` with pooled degrees of freedom.

    Values are returned in order of first appearance.
    """
    hyper = _as_hyper(hyper)
    a = np.asarray(a, dtype=float)
    if a.shape != hyper.alpha.shape:
        raise DomainError(f"dimension mismatch: a has {a.shape}, alpha has {hyper.alpha.shape}")
    d = a - float(b)
    scale = np.abs(d).max() if d.size else 0.0
    lams: list[float] = []
    dofs: list[float] = []
    if scale == 0.0:
        return GroupedCoefficients(np.zeros(0), np.zeros(0))
    tol = _MERGE_RTOL * scale
    for dj, aj in zip(d, hyper.alpha):
        if abs(dj) <= tol:
            continue
        for k, lk in enumerate(lams):
            if abs(lk - dj) <= tol:
                dofs[k] += 2.0 * aj
                break
        else:
            lams.append(float(dj))
            dofs.append(2.0 * float(aj))
    return GroupedCoefficients(np.array(lams), np.array(dofs))


def cumulants(g: GroupedCoefficients) -> CumulantVector:
    """First four cumulants of ``sum_k lambda_k T_k`` with T_k ~ chi2(r_k)."""
    if len(g) == 0:
        raise DegenerateError("no nonzero coefficients: the combination is identically zero")
    lam, r = g.lambdas, g.dofs
    return CumulantVector(
        float(np.sum(lam * r)),
        float(np.sum(2.0 * lam ** 2 * r)),
        float(np.sum(8.0 * lam ** 3 * r)),
        float(np.sum(48.0 * lam ** 4 * r)),
    )


def _linear(c) -> LinearConstraint:
    if isinstance(c, ProbabilisticConstraint):
        return c.linear
    return c


def _trivial_probability(g: GroupedCoefficients):
    """Probability when the sign of the combination is known, else None."""
    if len(g) == 0:
        return 1.0  # a @ theta == b identically
    if np.all(g.lambdas > 0):
        return 0.0
    if np.all(g.lambdas < 0):
        return 1.0
    return None


def prob_leq_edgeworth(hyper, c: LinearConstraint, order: int = 2) -> float:
    """Edgeworth approximation of ``P(a @ theta <= b)``, clamped to [0, 1].

    Uses the CDF form of the expansion in standardized cumulants evaluated
    at ``s = -kappa1 / sqrt(kappa2)``::

        order 1: Phi(s) - phi(s) * g3/6 * He2(s)
        order 2: ... - phi(s) * (g4/24 * He3(s) + g3**2/72 * He5(s))
    """
    if order not in (1, 2):
        raise DomainError("Edgeworth order must be 1 or 2")
    c = _linear(c)
    g = group_coefficients(c.a, c.b, hyper)
    if len(g) == 0:
        return 1.0
    k = cumulants(g)
    if not k.kappa2 > 0:
        raise DegenerateError("zero variance")
    sd = math.sqrt(k.kappa2)
    s = -k.kappa1 / sd
    g3 = k.kappa3 / sd ** 3
    phi = std_normal_pdf(s)
    p = std_normal_cdf(s) - phi * (g3 / 6.0) * hermite(2, s)
    if order == 2:
        g4 = k.kappa4 / k.kappa2 ** 2
        p -= phi * ((g4 / 24.0) * hermite(3, s) + (g3 * g3 / 72.0) * hermite(5, s))
    return min(1.0, max(0.0, p))


def truncation_point(g: GroupedCoefficients, abs_tol: float) -> float:
    """Upper limit T whose neglected tail is below ``abs_tol / 10`` in probability.

    Uses ``(1 + x^2)^(r/4) >= |x|^(r/2)``, so the integrand is bounded by
    ``C * t^-(1+s)`` with ``s = sum r_k / 2`` and ``C = prod |lambda_k|^(-r_k/2)``;
    the tail then integrates to ``C T^-s / s`` (divided by pi).
    """
    s = 0.5 * float(g.dofs.sum())
    log_c = -0.5 * float(np.sum(g.dofs * np.log(np.abs(g.lambdas))))
    target = abs_tol / 10.0 * math.pi * s
    log_t = (log_c - math.log(target)) / s
    return float(min(max(math.exp(min(log_t, 700.0)), 1.0), 1e15))


def prob_leq_exact(hyper, c: LinearConstraint,
                   cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``P(a @ theta <= b)`` by numerically inverting the characteristic function::

        1/2 - 1/pi * int_0^inf sin(1/2 sum r_k atan(lambda_k t))
                               / (t prod (1 + lambda_k^2 t^2)^(r_k/4)) dt
    """
    c = _linear(c)
    g = group_coefficients(c.a, c.b, hyper)
    trivial = _trivial_probability(g)
    if trivial is not None:
        return trivial
    # the event is scale free; unit max |lambda| keeps the integrand O(1) near t=1
    lam = g.lambdas / np.abs(g.lambdas).max()
    T = cfg.truncation_T if cfg.truncation_T is not None else truncation_point(
        GroupedCoefficients(lam, g.dofs), cfg.abs_tol)
    # error budget is in probability units; the integral is scaled by 1/pi
    value, err, n_int, ok = kernels.chi2comb_integral(
        lam, g.dofs, T, 0.9 * cfg.abs_tol * math.pi, cfg.max_subdivisions)
    if not math.isfinite(value):
        raise IntegrationError("non-finite value in chi-squared inversion integral")
    if not ok:
        raise IntegrationError(
            f"quadrature did not reach abs_tol={cfg.abs_tol} within "
            f"{cfg.max_subdivisions} intervals (estimate {err / math.pi:.3g})")
    p = 0.5 - value / math.pi
    return min(1.0, max(0.0, p))


def prob_leq_montecarlo(hyper, c: LinearConstraint, n_samples: int, rng,
                        batch: int = 200_000):
    """Fraction of Dirichlet draws with ``a @ theta <= b``; returns (estimate, std_err)."""
    hyper = _as_hyper(hyper)
    c = _linear(c)
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if c.a.shape != hyper.alpha.shape:
        raise DomainError("dimension mismatch between constraint and alpha")
    gen = as_generator(rng)
    d = c.a - c.b
    hits = 0
    left = int(n_samples)
    while left > 0:
        m = min(left, batch)
        # sign of sum (a_j - b) Y_j decides the event without normalizing
        y = gen.standard_gamma(np.broadcast_to(hyper.alpha, (m, hyper.dim)))
        hits += int(np.count_nonzero(y @ d <= 0.0))
        left -= m
    p = hits / n_samples
    return p, math.sqrt(p * (1.0 - p) / n_samples)


def prob_leq(hyper, c: LinearConstraint, method: str = "edgeworth2",
             cfg: QuadratureConfig = QuadratureConfig()) -> float:
    if method == "edgeworth1":
        return prob_leq_edgeworth(hyper, c, 1)
    if method == "edgeworth2":
        return prob_leq_edgeworth(hyper, c, 2)
    if method == "exact":
        return prob_leq_exact(hyper, c, cfg)
    raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")


def in_feasible_set(hyper, pc: ProbabilisticConstraint, method: str = "edgeworth2",
                    cfg: QuadratureConfig = QuadratureConfig()) -> bool:
    """Whether the prior puts at least ``pc.eta`` mass on the half-space."""
    return prob_leq(hyper, pc.linear, method, cfg) >= pc.eta


def edgeworth_probs(D, alpha, order: int = 2) -> np.ndarray:
    """Edgeworth probabilities for many constraints (and many alphas) at once.

    Row ``i`` of ``D`` holds ``a_i - b_i``.  Cumulant sums are additive over
    coordinates, so no grouping is needed: ``kappa_m = c_m * sum_j d_ij^m 2 alpha_j``.
    ``alpha`` may be a vector (result shape ``(l,)``) or a stack of vectors
    (result shape ``(k, l)``).  Agrees with :func:`prob_leq_edgeworth` entrywise.
    """
    if order not in (1, 2):
        raise DomainError("Edgeworth order must be 1 or 2")
    D = np.atleast_2d(np.asarray(D, dtype=float))
    r = 2.0 * np.asarray(alpha, dtype=float)
    D2 = D * D
    k1 = r @ D.T
    k2 = 2.0 * (r @ D2.T)
    k3 = 8.0 * (r @ (D2 * D).T)
    out = np.ones(k1.shape)
    ok = k2 > 0
    k2 = np.where(ok, k2, 1.0)
    sd = np.sqrt(k2)
    s = -k1 / sd
    g3 = k3 / (k2 * sd)
    phi = np.exp(-0.5 * s * s) * (1.0 / math.sqrt(2.0 * math.pi))
    s2 = s * s
    corr = (g3 / 6.0) * (s2 - 1.0)
    if order == 2:
        g4 = 48.0 * (r @ (D2 * D2).T) / (k2 * k2)
        corr = corr + (g4 / 24.0) * s * (s2 - 3.0) + (g3 * g3 / 72.0) * s * (s2 * (s2 - 10.0) + 15.0)
    p = np.clip(ndtr(s) - phi * corr, 0.0, 1.0)
    return np.where(ok, p, out)


def _two_group(row):
    """``(lam_pos, lam_neg)`` if the nonzero entries take one positive and one
    negative value, else None."""
    pos = row[row > 0]
    neg = row[row < 0]
    if pos.size == 0 or neg.size == 0:
        return None
    scale = max(pos.max(), -neg.min())
    if np.ptp(pos) > _MERGE_RTOL * scale or np.ptp(neg) > _MERGE_RTOL * scale:
        return None
    return float(pos[0]), float(neg[0])


def exact_probs(D, alpha, cfg: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Exact probabilities for every row of ``D = A - b`` (and stacked alphas).

    Rows whose coefficients take a single positive and a single negative
    value reduce to a beta law: with ``X = G+ / (G+ + G-)`` the event is
    ``X <= -lam_neg / (lam_pos - lam_neg)``, so the regularized incomplete
    beta function gives the answer in closed form.  Sign-definite rows are
    trivial and everything else goes through the quadrature.
    """
    D = np.atleast_2d(np.asarray(D, dtype=float))
    alpha = np.asarray(alpha, dtype=float)
    stacked = alpha.ndim == 2
    al = alpha if stacked else alpha[None, :]
    out = np.empty((al.shape[0], D.shape[0]))
    for i, row in enumerate(D):
        if not np.any(row > 0):
            out[:, i] = 1.0
            continue
        if not np.any(row < 0):
            out[:, i] = 0.0
            continue
        pair = _two_group(row)
        if pair is not None:
            lp, ln = pair
            a_pos = al[:, row > 0].sum(axis=1)
            a_neg = al[:, row < 0].sum(axis=1)
            out[:, i] = betainc(a_pos, a_neg, -ln / (lp - ln))
            continue
        c = LinearConstraint(row, 0.0)
        for k, a in enumerate(al):
            out[k, i] = prob_leq_exact(DirichletHyper(a), c, cfg)
    return out if stacked else out[0]
