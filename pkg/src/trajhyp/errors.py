"""Exception types raised across the package."""


class TrajHypError(Exception):
    """Base class for all package errors."""


class LengthMismatch(TrajHypError, ValueError):
    pass


class ParseError(TrajHypError, ValueError):
    """Malformed map or scenario text. Carries the 1-based line and column."""

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"col {column}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(TrajHypError, ValueError):
    pass


class CapacityExceeded(TrajHypError, RuntimeError):
    pass


class EmptyGroundTruth(TrajHypError, ValueError):
    pass


class ExternalGeneratorFailure(TrajHypError, RuntimeError):
    pass
