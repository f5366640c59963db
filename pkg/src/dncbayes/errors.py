"""Exception types raised across the package."""


class DncError(Exception):
    """Base class for all package errors."""


class ImproperDistribution(DncError):
    """Raised when asked to sample from or normalize a kernel-only parameterization."""


class OutOfSupport(DncError, ValueError):
    """Raised when a density is evaluated outside the support of its family."""


class DegenerateLikelihood(DncError):
    """Raised when every component assigns zero likelihood to an observation."""


class ImproperConditional(DncError):
    """Raised when a conditional posterior is not a proper distribution."""

    def __init__(self, message, sweep=None):
        if sweep is not None:
            message = f"{message} (sweep {sweep})"
        super().__init__(message)
        self.sweep = sweep


class ShapeAtBoundary(DncError):
    """Raised when a deconvolution component shape is not above one."""


class InvalidShardCount(DncError, ValueError):
    """Raised when more shards are requested than there are observations."""


class GridMismatch(DncError, ValueError):
    """Raised when densities evaluated on different grids are combined or compared."""


class MissingParams(DncError):
    """Raised when parameter summaries are requested from draws that carry none."""


class ShardFailure(DncError):
    """Raised when a shard chain fails; carries the shard index."""

    def __init__(self, shard, cause):
        super().__init__(f"shard {shard} failed: {cause!r}")
        self.shard = shard
        self.cause = cause


class ParseError(DncError, ValueError):
    """Raised on malformed input files, with the offending line and column."""

    def __init__(self, message, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyFile(ParseError):
    """Raised when an input file holds no data rows."""
