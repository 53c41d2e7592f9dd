"""Exception hierarchy shared by every module."""


class FsvmTrendError(Exception):
    """Base class; the CLI maps it to exit status 1."""


class ParseError(FsvmTrendError):
    pass


class DuplicateDateError(ParseError):
    pass


class ParameterError(FsvmTrendError, ValueError):
    pass


class ShapeError(FsvmTrendError, ValueError):
    pass


class DegenerateRangeError(FsvmTrendError):
    """high == low, so the bar has no range to place the close in."""


class DegenerateFeatureError(FsvmTrendError):
    pass


class ClassError(FsvmTrendError):
    """Training data is missing one of the two direction classes."""


class DegenerateBoxError(FsvmTrendError):
    pass


class UsageError(FsvmTrendError):
    """Bad configuration or a missing/unreadable file; the CLI exits with status 2."""
