"""Exception hierarchy.

Two branches matter for the CLI exit-code contract: ``DataError`` (malformed
or incompatible inputs, exit code 3) and ``NumericError`` (rank/conditioning
failures during computation, exit code 4). Argument-validation problems use
plain ``ValueError``.
"""


class FofrError(Exception):
    """Base class for all package-specific errors."""


class DataError(FofrError):
    """Input data is malformed or incompatible."""


class IncompatibleGridsError(DataError):
    """Operands are discretized on different grids."""


class IncompatibleSamplesError(DataError):
    """Functional samples have mismatched sample sizes."""


class InsufficientSampleError(DataError):
    """Fewer observations than the operation requires."""


class NotCenteredError(DataError):
    """Operation requires a centered sample."""


class NumericError(FofrError):
    """A numeric procedure failed (rank, conditioning, degeneracy)."""


class GridTooCoarseError(NumericError):
    """Grid has too few points to support the finite-difference stencils."""


class InsufficientRankError(NumericError):
    """Covariance rank cannot support the requested truncation level."""

    def __init__(self, requested: int, achievable: int):
        self.requested = requested
        self.achievable = achievable
        super().__init__(
            f"covariance supports at most {achievable} components, "
            f"requested {requested}"
        )


class InsufficientEigenvaluesError(NumericError):
    """Too few positive eigenvalues for the log-log exponent regression."""


class SingularSystemError(NumericError):
    """Penalized normal equations are singular."""


class GcvUndefinedError(NumericError):
    """GCV denominator is non-positive (effective dof exhausted)."""


class NoValidLambdaError(NumericError):
    """Every grid point produced an undefined GCV score."""


class ReplicateFailedError(NumericError):
    """A bootstrap replicate failed to fit."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"bootstrap replicate {index} failed: {cause}")


class QuantileUnstableError(NumericError):
    """Too few bootstrap replicates for the requested quantile."""


class InvalidMasksError(NumericError):
    """Both extremal masks are empty."""


class DegenerateTruncationError(NumericError):
    """Truncated eigenvalue sums degenerate (u_n <= 0)."""


class FitFailedError(NumericError):
    """A leave-one-out refit failed."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"leave-one-out fit without subject {index} failed: {cause}")
