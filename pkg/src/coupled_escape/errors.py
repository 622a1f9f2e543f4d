"""Exception types raised by the library.

Every error derives from :class:`EscapeError` so callers (the CLI in
particular) can catch library failures with a single ``except`` clause.
"""


class EscapeError(Exception):
    """Base class for all library errors."""


class DomainError(EscapeError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ValidityError(EscapeError, ValueError):
    """A saddle profile would need an imaginary amplitude."""


class SingularityError(EscapeError, ArithmeticError):
    """A determinant vanishes (zero mode at the critical length)."""


class ConvergenceError(EscapeError, RuntimeError):
    """An iterative or extrapolated computation failed to settle."""


class NumericalOverflowError(EscapeError, OverflowError):
    """Non-finite values appeared while integrating a linear system."""


class InstabilityError(EscapeError, RuntimeError):
    """A lattice trajectory blew up, usually because the time step is too large."""


class InsufficientSamplingError(EscapeError, RuntimeError):
    """Too many Monte Carlo runs were censored to estimate a mean."""
