"""Exception types shared across the package.

Every error raised on a bad input or a degenerate computation derives from
LabError so callers (and the CLI) can map failures to exit codes in one place.
"""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(LabError):
    """A cloud file violates the declared ASCII PCD/PLY subset."""

    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class EmptyCloud(LabError):
    """A parsed file contained no valid points."""


class InvalidTransform(LabError):
    """Rotation matrix is not orthonormal or scale is not positive."""


class DegenerateCloud(LabError):
    """Cloud carries too little geometry for the requested computation."""


class AmbiguousFrame(LabError):
    """Covariance eigenvalues too close to pick a stable reference frame."""


class DimensionMismatch(LabError):
    """Two histograms of different length were compared."""


class InvalidHistogram(LabError):
    """Histogram entries are NaN, non-finite, or sum to zero."""


class UnknownMetric(LabError):
    """Distance metric name is not one of the supported set."""


class UnknownDescriptor(LabError):
    """Descriptor name has no registered implementation."""


class MissingRepresentation(LabError):
    """A view lacks the hand-crafted or deep vector the config requires."""


class EmptyMemory(LabError):
    """Classification was requested against a memory with no instances."""


class InsufficientViews(LabError):
    """A category has fewer views than an operation needs."""

    def __init__(self, category, have, need):
        self.category = category
        self.have = have
        self.need = need
        super().__init__(f"category {category!r} has {have} views, needs {need}")


class SchemaError(LabError):
    """A feature file row violates the feature CSV schema."""

    def __init__(self, row, reason):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class EmptyDataset(LabError):
    """No usable views were found."""


class ConfigError(LabError):
    """Experiment configuration file is invalid."""


# Exit codes used by the CLI: 0 success, 2 usage, 3 data, 4 degenerate input.
DATA_ERRORS = (
    ParseError,
    DimensionMismatch,
    InvalidHistogram,
    UnknownMetric,
    UnknownDescriptor,
    MissingRepresentation,
    InsufficientViews,
    SchemaError,
    EmptyDataset,
    ConfigError,
)
DEGENERATE_ERRORS = (EmptyCloud, DegenerateCloud, AmbiguousFrame, EmptyMemory)


def exit_code_for(exc):
    """Map an exception to the CLI exit code contract."""
    if isinstance(exc, DEGENERATE_ERRORS):
        return 4
    if isinstance(exc, DATA_ERRORS):
        return 3
    if isinstance(exc, LabError):
        return 3
    raise exc
