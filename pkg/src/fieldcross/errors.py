"""Exception types shared across the package.

``NumericalError`` subclasses signal that a computation ran but could not
deliver the requested accuracy; the CLI maps them to exit status 2.  Invalid
inputs raise plain ``ValueError`` (exit status 1).
"""


class NumericalError(RuntimeError):
    pass


class QuadratureError(NumericalError):
    pass


class BracketError(NumericalError):
    """No sign change of x**alpha * L(x) - target could be located."""


class MonotonicityError(NumericalError):
    """x**alpha * L(x) is not increasing on the search grid."""


class FactorizationError(NumericalError):
    pass


class GridResolutionWarning(UserWarning):
    pass
