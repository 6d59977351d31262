"""Linear and probabilistic parameter constraints.

A linear constraint is the closed half-space ``a @ theta <= b``.  Pairing it
with a confidence ``eta`` gives a probabilistic constraint, read as
``P(a @ theta <= b) >= eta`` under the prior.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, UnsupportedConstraintError


def _vec(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != 1:
        raise DomainError("coefficient vector must be one-dimensional")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LinearConstraint:
    a: np.ndarray
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a))
        object.__setattr__(self, "b", float(self.b))
        if not (np.all(np.isfinite(self.a)) and np.isfinite(self.b)):
            raise DomainError("constraint coefficients must be finite")

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def is_degenerate(self) -> bool:
        """True when every coefficient is zero (the set is all or nothing)."""
        return not np.any(self.a)

    def __eq__(self, other):
        return (isinstance(other, LinearConstraint)
                and np.array_equal(self.a, other.a) and self.b == other.b)

    def __hash__(self):
        return hash((self.a.tobytes(), self.b))

    def __repr__(self):
        return f"LinearConstraint(a={self.a.tolist()}, b={self.b})"

    def scaled(self, c: float) -> "LinearConstraint":
        if not c > 0:
            raise DomainError("only positive rescaling preserves the half-space")
        return LinearConstraint(self.a * c, self.b * c)

    def negated(self) -> "LinearConstraint":
        """The complementary half-space (closure of ``a @ theta > b``)."""
        return LinearConstraint(-self.a, -self.b)


@dataclass(frozen=True)
class ProbabilisticConstraint:
    linear: LinearConstraint
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "eta", float(self.eta))
        if not 0.0 < self.eta < 1.0:
            raise DomainError(f"confidence must lie in (0, 1), got {self.eta}")

    @property
    def a(self) -> np.ndarray:
        return self.linear.a

    @property
    def b(self) -> float:
        return self.linear.b

    @property
    def dim(self) -> int:
        return self.linear.dim

    def to_record(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b, "eta": self.eta}

    @classmethod
    def from_record(cls, rec: dict) -> "ProbabilisticConstraint":
        try:
            return cls(LinearConstraint(rec["a"], rec["b"]), rec["eta"])
        except KeyError as exc:
            raise DomainError(f"constraint record missing key {exc}") from None


class ConstraintSet(tuple):
    """Ordered, immutable sequence of probabilistic constraints of one dimension."""

    def __new__(cls, constraints: Iterable[ProbabilisticConstraint] = ()):
        items = tuple(constraints)
        for c in items:
            if not isinstance(c, ProbabilisticConstraint):
                raise TypeError("ConstraintSet holds ProbabilisticConstraint items")
        dims = {c.dim for c in items}
        if len(dims) > 1:
            raise DomainError(f"constraints have mixed dimensions {sorted(dims)}")
        return super().__new__(cls, items)

    @classmethod
    def from_linear(cls, linear: Iterable[LinearConstraint], eta: float) -> "ConstraintSet":
        return cls(ProbabilisticConstraint(c, eta) for c in linear)

    @property
    def dim(self):
        return self[0].dim if self else None

    @property
    def linear(self) -> list[LinearConstraint]:
        return [c.linear for c in self]

    def matrix(self):
        """Stacked ``(A, b, eta)`` arrays."""
        if not self:
            return np.zeros((0, 0)), np.zeros(0), np.zeros(0)
        A = np.vstack([c.a for c in self])
        return A, np.array([c.b for c in self]), np.array([c.eta for c in self])

    def is_satisfied(self, theta) -> bool:
        return all(is_satisfied(c.linear, theta) for c in self)

    def to_records(self) -> list[dict]:
        return [c.to_record() for c in self]

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "ConstraintSet":
        return cls(ProbabilisticConstraint.from_record(r) for r in records)


# -- builders --------------------------------------------------------------------

def _check_index(i, n):
    if not (isinstance(i, (int, np.integer)) and 0 <= i < n):
        raise DomainError(f"index {i!r} out of range for dimension {n}")


def _unit(i, n):
    e = np.zeros(n)
    e[i] = 1.0
    return e


def ordering(i: int, j: int, n: int) -> LinearConstraint:
    """theta_i <= theta_j."""
    _check_index(i, n)
    _check_index(j, n)
    if i == j:
        raise DomainError("ordering needs two distinct indices")
    return LinearConstraint(_unit(i, n) - _unit(j, n), 0.0)


def chain(indices: Sequence[int], n: int) -> list[LinearConstraint]:
    """theta_{k0} <= theta_{k1} <= ... as consecutive orderings."""
    return [ordering(i, j, n) for i, j in zip(indices, indices[1:])]


def upper(i: int, c: float, n: int) -> LinearConstraint:
    """theta_i <= c."""
    _check_index(i, n)
    return LinearConstraint(_unit(i, n), c)


def lower(i: int, c: float, n: int) -> LinearConstraint:
    """theta_i >= c."""
    _check_index(i, n)
    return LinearConstraint(-_unit(i, n), -c)


def box(i: int, lo: float, hi: float, n: int) -> tuple[LinearConstraint, LinearConstraint]:
    if lo > hi:
        raise DomainError(f"empty box: lo={lo} > hi={hi}")
    return lower(i, lo, n), upper(i, hi, n)


def sum_band(lo: float, hi: float, indices: Sequence[int], n: int):
    if lo > hi:
        raise DomainError(f"empty band: lo={lo} > hi={hi}")
    a = np.zeros(n)
    for i in indices:
        _check_index(i, n)
        a[i] = 1.0
    return LinearConstraint(-a, -lo), LinearConstraint(a, hi)


def difference_upper(i: int, j: int, c: float, n: int, lo: float = None):
    """|theta_i - theta_j| <= c as two half-spaces.

    A positive lower bound on the absolute difference describes the union of
    two half-spaces, which has no single linear form, so ``lo`` is refused.
    """
    if lo is not None and lo > 0:
        raise UnsupportedConstraintError(
            "a lower bound on |theta_i - theta_j| is nonconvex and not supported")
    d = ordering(i, j, n).a
    if c < 0:
        raise DomainError("difference bound must be nonnegative")
    return LinearConstraint(d, c), LinearConstraint(-d, c)


# -- evaluation ------------------------------------------------------------------

def evaluate(c: LinearConstraint, theta) -> float:
    """Slack ``b - a @ theta``; nonnegative means satisfied."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != c.a.shape:
        raise DomainError(f"dimension mismatch: constraint {c.dim}, theta {theta.shape}")
    return c.b - float(c.a @ theta)


def is_satisfied(c: LinearConstraint, theta) -> bool:
    return evaluate(c, theta) >= 0.0


def require_nondegenerate(c: LinearConstraint):
    if c.is_degenerate:
        raise DegenerateError("constraint has an all-zero coefficient vector")
