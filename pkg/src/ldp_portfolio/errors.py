"""Exception hierarchy.

Validation problems (bad model input, bad parameters) derive from
``ValidationError``; failures of a numerical procedure on a valid input
derive from ``NumericalError``.  The CLI maps the two families to
different exit codes.
"""


class LdpError(Exception):
    pass


class ValidationError(LdpError, ValueError):
    pass


class ModelValidationError(ValidationError):
    pass


class DomainError(ValidationError):
    """Raised when a risk-sensitivity parameter lies outside lambda < 1."""


class NumericalError(LdpError, ArithmeticError):
    pass


class SingularMatrix(NumericalError):
    pass


class NoSolution(NumericalError):
    """No Riccati root with the required sign/stability exists."""


class Unsolvable(NumericalError):
    """The linear equation for p2 has no solution (D singular, E not in range)."""


class Unstable(NumericalError):
    pass


class NotAttained(NumericalError):
    pass


class DegenerateInfeasible(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class DomainTooNarrow(NumericalError):
    pass


class NumericalBlowup(NumericalError):
    pass
