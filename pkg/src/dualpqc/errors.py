"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class DatasetParseError(DomainError):
    """A dataset or image file could not be parsed.

    ``line`` is the 1-based line number of the offending row, when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(DomainError):
    """Invalid training configuration (unknown key, bad value)."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class TrainingDiverged(RuntimeError):
    """A loss became NaN during training. ``dump`` holds the state at abort."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
