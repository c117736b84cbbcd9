"""Coupled-dipole simulation of optical cavities built from two-dimensional atom arrays.

Units throughout: lengths in the array-atom wavelength (k0 = 2*pi), rates and
detunings in the array-atom linewidth, times in its inverse.
"""

from .errors import ArrayCavityError, DomainError, InvalidArgument, NumericalFailure

__version__ = "0.1.0"

__all__ = [
    "ArrayCavityError",
    "DomainError",
    "InvalidArgument",
    "NumericalFailure",
    "__version__",
]
