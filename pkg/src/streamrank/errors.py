"""Exception hierarchy shared across the toolkit."""


class StreamrankError(Exception):
    """Base class for every error this package raises deliberately."""


class ValidationError(StreamrankError, ValueError):
    """Invalid inputs: bad specs, out-of-range parameters, malformed configs."""


class IngestionError(ValidationError):
    """CSV ingestion failure; carries the offending location when known."""

    def __init__(self, message, *, path=None, row=None, column=None):
        parts = [message]
        if column is not None:
            parts.append(f"column {column!r}")
        if row is not None:
            parts.append(f"row {row}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(", ".join(parts))
        self.path = path
        self.row = row
        self.column = column


class ScalerStateError(StreamrankError):
    """A scaler was applied before being fitted."""


class DivergenceError(StreamrankError):
    """A learner update produced non-finite model parameters."""

    def __init__(self, message, *, batch_index=None):
        super().__init__(message)
        self.batch_index = batch_index


class ConditioningError(StreamrankError):
    """A linear solve or covariance update became numerically unusable."""


class DegenerateStatisticError(StreamrankError):
    """A rank statistic is undefined for the given inputs (e.g. identical rankings)."""


class ArchiveIntegrityError(StreamrankError):
    """A stored results archive is internally inconsistent."""


class StageError(StreamrankError):
    """Error raised partway through an experiment, tagged with the failing stage."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class LowPowerWarning(UserWarning):
    """The test is being run in a regime where it has little statistical power."""


class DivergedCellWarning(UserWarning):
    """Score cells had to be excluded from ranking because every trace diverged."""
