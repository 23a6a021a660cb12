"""Exception types raised across the package."""


class OptBistabError(Exception):
    """Base class for every error raised by optbistab."""


class ValidationError(OptBistabError, ValueError):
    """A physical block violates one of its invariants."""


class ParseError(OptBistabError, ValueError):
    """A configuration document could not be parsed.

    ``line`` and ``field`` are filled in when the location is known.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NonUniqueSteadyState(OptBistabError):
    """The stationary state is not unique (degenerate field configuration)."""


class StepTooLarge(OptBistabError, ValueError):
    """The fixed RK4 step violates the stability bound."""


class GridTooCoarse(OptBistabError):
    """Two turning points fall inside a single grid cell."""


class ZeroMeanBranch(OptBistabError, ZeroDivisionError):
    """Percentage error requested for a branch whose mean is ~0."""


class NotBistable(OptBistabError):
    """The curve has no turning points."""


class IndistinguishableStates(OptBistabError):
    """Logic levels overlap too much to be told apart."""


class HistoryUnderflow(OptBistabError, ValueError):
    """The feedback delay exceeds the allocated history buffer."""
