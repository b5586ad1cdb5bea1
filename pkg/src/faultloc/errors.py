"""Exception hierarchy shared by every module."""


class FaultLocError(Exception):
    """Base class for library errors."""


class NumericalFailure(FaultLocError):
    pass


class SingularBlock(NumericalFailure):
    """Raised when the B block of a chain matrix is too ill-conditioned to invert."""

    def __init__(self, message, cond=float("inf")):
        super().__init__(message)
        self.cond = cond


class DomainViolation(FaultLocError, ValueError):
    pass


class AssumptionViolated(FaultLocError):
    pass


class GridMismatch(FaultLocError, ValueError):
    pass


class ConjugateSymmetryViolated(NumericalFailure):
    pass


class ConfigInvalid(FaultLocError, ValueError):
    """Bad configuration value; ``path`` names the offending dotted key."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
