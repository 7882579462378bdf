"""General-dyne monitoring of a thermally damped bosonic mode.

Modules:

* :mod:`gendyne.gaussian` - phase-space algebra of Gaussian states;
* :mod:`gendyne.fock` - dense truncated Fock-space oracle;
* :mod:`gendyne.povm` - the general-dyne POVM and its outcome statistics;
* :mod:`gendyne.sme` - unconditional and conditional dynamics (two engines);
* :mod:`gendyne.scheme` - the unbalanced double-homodyne realisation;
* :mod:`gendyne.cli` - command-line front end.
"""

from .errors import (
    DomainError,
    GendyneError,
    HomodyneLimitError,
    IntegrationError,
    NumericalError,
    TruncationError,
)
from .povm import GendyneOutcome, Unravelling

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "GendyneError",
    "GendyneOutcome",
    "HomodyneLimitError",
    "IntegrationError",
    "NumericalError",
    "TruncationError",
    "Unravelling",
    "__version__",
]
