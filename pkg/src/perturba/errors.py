"""Exception hierarchy.

The CLI maps these onto process exit codes, so each class carries one.
"""


class PerturbaError(Exception):
    exit_code = 1


class SpecificationError(PerturbaError, ValueError):
    """Malformed problem data, config, or grid arguments."""

    exit_code = 2


class AssumptionError(PerturbaError):
    """A standing assumption of the problem class does not hold."""

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalError(PerturbaError, ArithmeticError):
    exit_code = 4


class DegeneracyError(NumericalError):
    """Eigenvalue collision, singular startup, or resonance."""


class UnsupportedOrderError(NumericalError):
    """Requested order needs layer sources the construction does not cover."""


class AssemblyError(NumericalError):
    """An assembled term violates its boundary or initial contract."""
