"""Exception types shared across the package."""


class FbmlabError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FbmlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridMismatch(FbmlabError, ValueError):
    """Two objects that must share a time grid do not."""


class EmbeddingNotNonnegative(FbmlabError, RuntimeError):
    """Circulant embedding produced an eigenvalue below the clip tolerance."""


class CovarianceNotPD(FbmlabError, RuntimeError):
    """Numerical Cholesky of the exact covariance failed (matrix not PD)."""


class ThresholdViolated(FbmlabError, ValueError):
    """A smallness condition required by a closed-form constant fails."""


class NoContraction(FbmlabError, RuntimeError):
    """Fixed-point iteration failed to converge and no contraction holds."""
