"""Exception hierarchy shared by every atca module."""


class AtcaError(Exception):
    """Base class for all library errors."""


class InvalidStroke(AtcaError, ValueError):
    pass


class TooFewPoints(InvalidStroke):
    pass


class NonMonotoneTime(InvalidStroke):
    pass


class ClickNotStroke(InvalidStroke):
    pass


class InvalidFactor(AtcaError, ValueError):
    pass


class EmptyMatrix(AtcaError, ValueError):
    pass


class DimensionMismatch(AtcaError, ValueError):
    pass


class SingleClass(AtcaError, ValueError):
    pass


class NonFinite(AtcaError, ValueError):
    pass


class ConvergenceError(AtcaError, RuntimeError):
    pass


class BadBinCounts(AtcaError, ValueError):
    pass


class NoOtherUsers(AtcaError, ValueError):
    pass


class EmptyPositives(AtcaError, ValueError):
    pass


class MissingCell(AtcaError, KeyError):
    pass


class UnknownSetting(AtcaError, KeyError):
    pass


class TooFewStrokes(AtcaError, ValueError):
    pass


class EmptyScores(AtcaError, ValueError):
    pass


class IncompleteMatrix(AtcaError, ValueError):
    pass


class InsufficientData(AtcaError, ValueError):
    pass


class ParseError(AtcaError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaVersionMismatch(AtcaError, ValueError):
    pass
