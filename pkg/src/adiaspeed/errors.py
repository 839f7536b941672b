"""Exception hierarchy shared by all modules."""


class AdiaspeedError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(AdiaspeedError, ValueError):
    pass


class DegeneracyError(AdiaspeedError):
    pass


class ParseError(AdiaspeedError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RefineGridError(AdiaspeedError):
    """The sampled eigenstate path jumped between samples."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class ConfigurationError(AdiaspeedError, ValueError):
    pass


class SearchError(AdiaspeedError):
    pass


class AmbiguityError(AdiaspeedError):
    pass


class BuildAborted(AdiaspeedError):
    pass
