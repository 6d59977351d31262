"""Exception types raised across the package."""


class ProbconError(Exception):
    """Base class for package errors."""


class DomainError(ProbconError, ValueError):
    """An argument lies outside the domain of an operation."""


class DegenerateError(DomainError):
    """The requested distribution or constraint is degenerate."""


class UnsupportedConstraintError(DomainError):
    """A constraint form that cannot be represented as a closed half-space."""


class DecompositionError(DomainError):
    """A matrix that should be symmetric positive definite is not."""


class IntegrationError(ProbconError, ArithmeticError):
    """Quadrature hit a non-finite value or failed to converge."""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class InfeasibleError(ProbconError):
    """No point satisfies the requested constraints."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
