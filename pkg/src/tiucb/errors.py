"""Exception hierarchy shared across the package."""


class BanditError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BanditError, ValueError):
    """Mismatched or invalid construction parameters."""


class EmptyRunError(BanditError, ValueError):
    """A run was requested with a zero-length horizon."""


class DegenerateFitError(BanditError, ValueError):
    """Least squares needs at least two distinct abscissae."""


class InsufficientDataError(BanditError, ValueError):
    """Not enough observations to fill both detection windows."""


class InvalidWindowError(BanditError, ValueError):
    pass


class TraceExhaustedError(BanditError, IndexError):
    """An arm was pulled past the end of its recorded trace."""


class TraceParseError(BanditError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CoverageError(BanditError, KeyError):
    """A per-pull mean estimate needed by the regret sum is missing."""

    def __init__(self, arm: int, pull_index: int):
        self.arm = arm
        self.pull_index = pull_index
        super().__init__(f"no mean estimate for arm {arm} at pull {pull_index}")

    def __str__(self) -> str:
        return self.args[0]


class UnsupportedError(BanditError):
    """The requested operation needs information the environment lacks."""
