"""Exception types raised across the package."""


class ClearError(Exception):
    """Base class for all errors raised by clearir."""


class ParameterError(ClearError, ValueError):
    """An argument is outside its valid domain."""


class EmptyCollectionError(ClearError, ValueError):
    def __init__(self, message="empty collection"):
        super().__init__(message)


class FormatError(ClearError, ValueError):
    """A record in an input file could not be parsed.

    ``path`` and ``lineno`` point at the offending record when known.
    """

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)


class UndefinedTermError(ClearError, ValueError):
    """RSJ weight requested for a term that occurs in no document."""


class StaleIndexError(ClearError):
    """A dense index was built with different encoder parameters."""


class TrainingError(ClearError):
    pass
