"""Exception hierarchy shared across the package."""


class StdoError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(StdoError):
    """Operands have inconsistent or unsupported shapes."""


class NumericsError(StdoError):
    """Non-finite values or a diverged computation."""


class FormatError(StdoError):
    """Malformed file or byte-stream input."""


class BadMagicError(FormatError):
    """The input does not start with the stream magic."""


class VersionMismatchError(FormatError):
    """The stream declares an unsupported container version."""


class TruncatedStreamError(FormatError):
    """The stream ends before its declared payload does."""


class AssignmentRangeError(FormatError):
    """A chunk-assignment byte is outside [0, k)."""


class ParamCountError(FormatError):
    """A model blob's parameter count disagrees with its architecture."""
