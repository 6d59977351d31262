"""Special functions, seeded sampling and adaptive quadrature.

Hermite polynomials here are the *probabilists'* family He_n, defined by
``phi^(n)(x) = (-1)^n He_n(x) phi(x)`` for the standard normal density
``phi``.  The physicists' H_n differ by scaling and would give wrong
Edgeworth corrections.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional

import numpy as np

from .errors import DecompositionError, DomainError, IntegrationError

__all__ = [
    "QuadratureConfig",
    "QuadratureResult",
    "RngHandle",
    "std_normal_pdf",
    "std_normal_cdf",
    "std_normal_quantile",
    "hermite",
    "adaptive_quadrature",
    "gk15",
    "as_generator",
    "sample_gamma",
    "sample_dirichlet",
    "sample_mvn",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_NORMAL = NormalDist()

RNG_ALGORITHM = "PCG64"


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances for adaptive integration.

    ``truncation_T`` replaces the infinite upper limit of the chi-squared
    inversion integral.  ``None`` lets the caller pick it from a tail bound.
    """

    abs_tol: float = 1e-9
    max_subdivisions: int = 4000
    truncation_T: Optional[float] = None

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise DomainError("abs_tol must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if self.truncation_T is not None and not self.truncation_T > 0:
            raise DomainError("truncation_T must be positive")


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error: float
    n_intervals: int
    converged: bool

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class RngHandle:
    """Seed plus algorithm name; a value, not a stream.

    Every call to :meth:`generator` starts a fresh stream, so two handles
    that compare equal always produce identical draws.  Use :meth:`spawn`
    to derive independent child handles (per replicate, per cell).
    """

    seed: int
    algorithm: str = RNG_ALGORITHM
    key: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.algorithm != RNG_ALGORITHM:
            raise DomainError(f"unsupported RNG algorithm {self.algorithm!r}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(self.key))
        return np.random.Generator(np.random.PCG64(ss))

    def spawn(self, *key: int) -> "RngHandle":
        return RngHandle(self.seed, self.algorithm, tuple(self.key) + tuple(int(k) for k in key))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngHandle):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngHandle(int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


# -- normal distribution ---------------------------------------------------

def _check_finite(x):
    if not math.isfinite(x):
        raise DomainError(f"expected a finite value, got {x!r}")


def std_normal_pdf(x: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * x * x)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function.

    ``erfc`` keeps full relative precision in the lower tail, where
    ``0.5 * (1 + erf(x))`` would cancel.
    """
    x = float(x)
    _check_finite(x)
    return 0.5 * math.erfc(-x / _SQRT2)


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf`.

    Starts from Wichura's AS241 (stdlib) and polishes with Newton steps,
    falling back to bisection whenever a step leaves the bracket.
    """
    p = float(p)
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile requires 0 < p < 1, got {p!r}")
    if p == 0.5:
        return 0.0
    x = _NORMAL.inv_cdf(p)
    lo, hi = -40.0, 40.0
    for _ in range(8):
        f = std_normal_cdf(x) - p
        if f == 0.0:
            break
        if f > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        d = std_normal_pdf(x)
        step = f / d if d > 0 else math.inf
        x_new = x - step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            # below resolution; x itself sits on the bracket edge, so stop here
            break
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(1.0, abs(x)):
            x = x_new
            break
        x = x_new
    return x


def hermite(k: int, x):
    """Probabilists' Hermite polynomial He_k(x) for 0 <= k <= 6.

    Works elementwise on arrays.
    """
    if not isinstance(k, (int, np.integer)) or not 0 <= k <= 6:
        raise DomainError(f"hermite order must be in 0..6, got {k!r}")
    x2 = x * x
    if k == 0:
        return x * 0 + 1.0
    if k == 1:
        return x * 1.0
    if k == 2:
        return x2 - 1.0
    if k == 3:
        return x * (x2 - 3.0)
    if k == 4:
        return x2 * (x2 - 6.0) + 3.0
    if k == 5:
        return x * (x2 * (x2 - 10.0) + 15.0)
    return x2 * (x2 * (x2 - 15.0) + 45.0) - 15.0


# -- quadrature --------------------------------------------------------------

# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (positive half).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights aligned with GK_NODES (zero on Kronrod-only nodes).
G_WEIGHTS = np.zeros(15)
G_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = [_WG[0], _WG[1], _WG[2], _WG[3], _WG[2], _WG[1], _WG[0]]


def gk15(f: Callable[[float], float], a: float, b: float):
    """One Gauss-Kronrod 15-point panel; returns (kronrod, |kronrod - gauss|)."""
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    vals = np.empty(15)
    for i, x in enumerate(c + h * GK_NODES):
        v = f(float(x))
        if not math.isfinite(v):
            raise IntegrationError(f"non-finite integrand value at x={x!r}", abscissa=float(x))
        vals[i] = v
    k = h * float(vals @ GK_WEIGHTS)
    g = h * float(vals @ G_WEIGHTS)
    return k, abs(k - g)


def adaptive_quadrature(f: Callable[[float], float], lo: float, hi: float,
                        cfg: QuadratureConfig = QuadratureConfig()) -> QuadratureResult:
    """Globally adaptive Gauss-Kronrod integration of ``f`` over [lo, hi].

    The interval with the largest error estimate is bisected until the
    summed estimate drops below ``cfg.abs_tol`` or ``cfg.max_subdivisions``
    bisections have been spent; in the latter case ``converged`` is False.
    """
    lo, hi = float(lo), float(hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("integration limits must be finite")
    if lo == hi:
        return QuadratureResult(0.0, 0.0, 0, True)
    sign = 1.0
    if hi < lo:
        lo, hi, sign = hi, lo, -1.0

    k, e = gk15(f, lo, hi)
    heap = [(-e, lo, hi, k)]
    total, err = k, e
    n_split = 0
    while err > cfg.abs_tol and n_split < cfg.max_subdivisions:
        neg_e, a, b, k_ab = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not (a < m < b):
            # interval exhausted at machine precision
            heapq.heappush(heap, (neg_e, a, b, k_ab))
            break
        k1, e1 = gk15(f, a, m)
        k2, e2 = gk15(f, m, b)
        total += k1 + k2 - k_ab
        err += e1 + e2 + neg_e
        heapq.heappush(heap, (-e1, a, m, k1))
        heapq.heappush(heap, (-e2, m, b, k2))
        n_split += 1
    # re-sum to shed the drift of the running updates
    total = math.fsum(item[3] for item in heap)
    err = math.fsum(-item[0] for item in heap)
    return QuadratureResult(sign * total, err, len(heap), err <= cfg.abs_tol)


# -- sampling ------------------------------------------------------------------

def sample_gamma(shape, rng, size=None):
    """Gamma(shape, scale=1) draws."""
    shape = np.asarray(shape, dtype=float)
    if np.any(~(shape > 0)) or np.any(~np.isfinite(shape)):
        raise DomainError("gamma shape must be positive and finite")
    return as_generator(rng).standard_gamma(shape, size=size)


def sample_dirichlet(alpha, rng, size=None):
    """Dirichlet draws built as normalized independent Gamma(alpha_j) variables."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 1 or alpha.size < 1:
        raise DomainError("alpha must be a nonempty vector")
    if np.any(~(alpha > 0)) or np.any(~np.isfinite(alpha)):
        raise DomainError("alpha must be strictly positive and finite")
    shape = alpha.shape if size is None else (int(size),) + alpha.shape
    y = as_generator(rng).standard_gamma(np.broadcast_to(alpha, shape))
    return y / y.sum(axis=-1, keepdims=True)


def cholesky_spd(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DecompositionError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise DecompositionError("covariance is not symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("covariance is not positive definite") from exc


def sample_mvn(mean, cov, rng, size=None):
    """Multivariate normal draws through a Cholesky factor."""
    mean = np.asarray(mean, dtype=float)
    L = cholesky_spd(cov)
    if L.shape[0] != mean.shape[0]:
        raise DomainError("mean and covariance dimensions differ")
    shape = mean.shape if size is None else (int(size),) + mean.shape
    z = as_generator(rng).standard_normal(shape)
    return mean + z @ L.T
