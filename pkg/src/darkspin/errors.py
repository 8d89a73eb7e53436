"""Exception hierarchy shared across the package.

Input-shaped problems derive from ``InputError`` (CLI exit code 2);
numerical failures derive from ``NumericalError`` (CLI exit code 3).
"""


class DarkspinError(Exception):
    pass


class InputError(DarkspinError, ValueError):
    """Malformed or inconsistent user input (bad CSV, unit mismatch, ...)."""


class InsufficientDataError(InputError):
    """Too few usable points survive filtering to attempt the operation."""


class AmbiguityError(InputError):
    """A selection rule (e.g. root-in-window) matched zero or several candidates."""


class GroupingError(InputError):
    """Peak triplets assigned to orientation classes are mutually inconsistent."""


class NumericalError(DarkspinError, RuntimeError):
    pass


class IntegrationAccuracyError(NumericalError):
    """Quadrature did not reach the requested tolerance.

    Carries the best available estimate in ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class TruncationError(NumericalError):
    """A finite sampling window could not be grown enough to bound its bias."""


class ConvergenceError(NumericalError):
    """An iterative fit or optimizer failed to converge."""


class UnidentifiableError(NumericalError):
    """The data does not constrain one or more parameters.

    ``direction`` names the flat parameter combination when known.
    """

    def __init__(self, message, direction=None):
        super().__init__(message)
        self.direction = direction
