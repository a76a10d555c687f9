"""Exception hierarchy.

Each family maps onto one CLI exit code so that callers can tell a bad
configuration apart from bad data or a numerical breakdown.
"""

from __future__ import annotations


class BddError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(BddError, ValueError):
    """Invalid option, flag combination or argument value."""

    exit_code = 2


class DataError(BddError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericalError(BddError, ArithmeticError):
    """A computation could not be carried out reliably."""

    exit_code = 4


class DegenerateFit(NumericalError):
    """Too few samples with positive kernel weight to fit the local polynomial.

    Parameters
    ----------
    n_effective : int
        Number of samples with strictly positive weight.
    dim : int
        Number of coefficients that had to be estimated.
    side : str, optional
        ``"control"`` or ``"treated"`` when raised from a two-sided fit.
    """

    def __init__(self, n_effective: int, dim: int, side: str | None = None):
        self.n_effective = int(n_effective)
        self.dim = int(dim)
        self.side = side
        where = f" on the {side} side" if side else ""
        super().__init__(
            f"degenerate local fit{where}: {self.n_effective} samples with "
            f"positive weight, {self.dim} coefficients"
        )

    def with_side(self, side: str) -> "DegenerateFit":
        return DegenerateFit(self.n_effective, self.dim, side)


class BiasUnavailable(NumericalError):
    """The pilot fit for the leading bias constant failed."""


class RbcUnavailable(NumericalError):
    """The order p+1 fit needed for robust bias correction failed."""


class BiasNearZero(NumericalError):
    """Estimated leading bias too small for a plug-in bandwidth."""


class ExperimentError(NumericalError):
    """Too many Monte Carlo replications failed.

    Parameters
    ----------
    message : str
        Summary of the failure.
    diagnostics : dict
        Failure counts and reasons by grid point.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
