"""Exception types shared across the toolkit."""


class SourceResolutionError(ValueError):
    """Mollifier width too small for the boundary discretization."""


class SingularOperatorError(RuntimeError):
    """Helmholtz operator is (near-)singular; solves are refused."""

    def __init__(self, message, sigma_min=None):
        super().__init__(message)
        self.sigma_min = sigma_min


class FixedPointDivergenceError(RuntimeError):
    """Fixed-point iteration hit max_iter without reaching tolerance."""

    def __init__(self, message, history, source_index=None):
        super().__init__(message)
        self.history = list(history)
        self.source_index = source_index


class BoundViolationError(AssertionError):
    """A proved inequality failed numerically (implementation bug)."""


class DegenerateRegularizerError(RuntimeError):
    """Truncated SVD kept no singular values."""


class ConfigHashMismatchError(RuntimeError):
    """Persisted artifact was produced under a different configuration."""
