"""Exception hierarchy shared by every module of the package."""


class GendyneError(Exception):
    """Base class for all package errors."""


class DomainError(GendyneError, ValueError):
    """A parameter lies outside its admissible range."""


class HomodyneLimitError(DomainError):
    """The general-dyne parameter is too close to +-1 for the requested path."""


class TruncationError(GendyneError):
    """The Fock truncation is too small for the requested state."""


class NumericalError(GendyneError, ArithmeticError):
    """A linear-algebra or quadrature step failed to reach its tolerance."""


class IntegrationError(NumericalError):
    """A stochastic integration step produced an invalid state."""
