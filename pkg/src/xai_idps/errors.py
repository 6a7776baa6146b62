"""Exception types raised across the pipeline."""


class XaiIdpsError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(XaiIdpsError, ValueError):
    """Input data or arguments violate a documented precondition."""


class RowError(ValidationError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class MissingColumn(ValidationError):
    pass


class ArityMismatch(RowError):
    pass


class UnparseableNumber(RowError):
    pass


class EmptyTable(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class UnknownClassWarning(UserWarning):
    pass


class DegenerateData(ValidationError):
    pass


class RoundsZero(ValidationError):
    pass


class SubsetTooLarge(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class KOutOfRange(ValidationError):
    pass


class EmptyData(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class UnorderedFeed(ValidationError):
    pass


class EncodingError(ValidationError):
    pass


class MissingArtifact(XaiIdpsError):
    """A pipeline stage needs an output that an earlier stage never wrote."""


class InvariantViolation(XaiIdpsError, AssertionError):
    pass
