"""Exception types shared across the package."""


class LgpcError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LgpcError):
    """Malformed or out-of-contract input data."""


class DegenerateNeighborhoodError(LgpcError):
    """Total kernel mass at the evaluation point is effectively zero."""


class SingularConditioningError(LgpcError):
    """The conditioning block of a local correlation matrix is singular."""


class EmptyRegionError(LgpcError):
    """No observations fall inside the requested test region."""


class EnvelopeFailureError(LgpcError):
    """Accept-reject sampling failed (invalid envelope or acceptance rate below 1e-3)."""


class NumericalError(LgpcError):
    """Unrecoverable numerical failure."""
