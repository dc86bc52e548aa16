"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to, so the command-line front
end can translate library failures without a lookup table.
"""


class RGMWMError(Exception):
    exit_code = 1


class InvalidInputError(RGMWMError, ValueError):
    exit_code = 1


class UnsupportedError(InvalidInputError):
    """Operation not defined for the requested model component."""


class SizeLimitError(InvalidInputError):
    """Requested problem size exceeds a documented hard limit."""


class IdentifiabilityError(RGMWMError):
    exit_code = 3


class NumericalFailureError(RGMWMError, ArithmeticError):
    exit_code = 4


class NoSolutionError(NumericalFailureError):
    """Root search found no sign change in the admissible bracket."""
