"""Exception hierarchy shared across the package.

Domain errors (bad physical input) map to CLI exit code 1, I/O problems
to exit code 2.
"""


class NmqdError(Exception):
    """Base class for all package errors."""


class DomainError(NmqdError, ValueError):
    """Input violates a documented precondition."""


class ShapeError(DomainError):
    """Array arguments have inconsistent shapes or lengths."""


class QuadratureError(NmqdError, RuntimeError):
    """Numerical quadrature failed to reach the requested accuracy."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DecompositionError(NmqdError, RuntimeError):
    """Exponential-sum decomposition of the correlation function failed."""


class FactorizationError(NmqdError, RuntimeError):
    """Covariance factorization failed even with maximum jitter."""


class CapacityError(NmqdError, RuntimeError):
    """Hierarchy size exceeds the configured memory budget."""


class IntegrationError(NmqdError, RuntimeError):
    """Propagation produced NaN/Inf or exceeded the norm guard."""


class ForwardError(NmqdError, RuntimeError):
    """A network forward pass produced non-finite activations."""

    def __init__(self, message, locus=None):
        super().__init__(message)
        self.locus = locus


class FileFormatError(NmqdError, OSError):
    """A data file does not conform to the expected layout."""
