"""Exception taxonomy shared across the package.

The CLI maps these onto its exit-code contract: file/format problems are
I/O errors (2), violated data preconditions are precondition errors (3),
contradictory or incomplete settings are configuration errors (4), and
failures of the numerics themselves are numeric errors (5).
"""


class CollapseLabError(Exception):
    """Base class for all package-specific errors."""


class FormatError(CollapseLabError):
    """Malformed file content: bad magic, ragged rows, unparseable fields."""


class EmptyDatasetError(CollapseLabError):
    """A dataset that must be non-empty is empty."""


class DimensionError(CollapseLabError):
    """Shape or dimensionality mismatch between operands."""


class InsufficientPointsError(CollapseLabError):
    """Too few points for the requested operation (e.g. size <= gamma)."""


class DomainError(CollapseLabError):
    """Argument outside the mathematical domain of a function."""


class DegenerateInputError(CollapseLabError):
    """Input with no usable variation, e.g. a constant series."""


class NumericalError(CollapseLabError):
    """Numerical failure at runtime, e.g. an indefinite covariance."""


class ConfigError(CollapseLabError):
    """Contradictory, incomplete, or out-of-range configuration."""


class InternalError(CollapseLabError):
    """Invariant violation that indicates a bug in this package."""
