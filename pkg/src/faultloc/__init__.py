"""Fault localisation on multi-conductor transmission lines."""
from .errors import (AssumptionViolated, ConfigInvalid, ConjugateSymmetryViolated,
                     DomainViolation, FaultLocError, GridMismatch, NumericalFailure,
                     SingularBlock)

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolated", "ConfigInvalid", "ConjugateSymmetryViolated", "DomainViolation",
    "FaultLocError", "GridMismatch", "NumericalFailure", "SingularBlock", "__version__",
]
