"""Exception types shared across the toolkit."""


class UnmixError(Exception):
    """Base class for all specmix errors."""


class DimensionMismatch(UnmixError, ValueError):
    """Operands have incompatible shapes or sizes."""


class DistanceUndefined(UnmixError, ValueError):
    """A spectral distance is undefined for the inputs (zero or constant vector)."""


class DegenerateInput(UnmixError, ValueError):
    """Input is degenerate for the requested operation (e.g. all-zero data)."""


class RankDeficient(UnmixError, ValueError):
    """The residual vanished before the requested number of selections.

    ``indices_found`` holds the selections made before the failure.
    """

    def __init__(self, message, indices_found=()):
        super().__init__(message)
        self.indices_found = list(indices_found)


class Infeasible(UnmixError, ValueError):
    """The count constraints cannot be satisfied.

    ``report`` optionally carries a structured feasibility report.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ParseError(UnmixError, ValueError):
    """File contents do not match the declared format."""


class IterationInvariantError(UnmixError, RuntimeError):
    """An internal monotonicity contract was violated during iteration."""
