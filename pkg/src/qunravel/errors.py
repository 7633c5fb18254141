"""Exception types raised by the library.

Validation errors carry the offending indices and the measured residual so
callers can report exactly which structural property failed and by how much.
"""


class QunravelError(Exception):
    """Base class for all library errors."""


class FamilyValidationError(QunravelError):
    """A projector family failed structural validation."""

    def __init__(self, message, indices=None, residual=None):
        super().__init__(message)
        self.indices = indices
        self.residual = residual


class NotIdempotent(FamilyValidationError):
    """A supplied matrix is not an orthogonal projector (P*P != P or P != P^dagger)."""


class NotOrthogonal(FamilyValidationError):
    """Two projectors in the family have a nonzero product."""


class NotComplete(FamilyValidationError):
    """The projectors do not sum to the identity."""


class DuplicateEigenvalue(FamilyValidationError):
    """Two spectral values in the family coincide."""


class ZeroState(QunravelError):
    """A state vector with (numerically) vanishing norm was supplied or produced."""


class DimensionMismatch(QunravelError):
    """Operands act on Hilbert spaces of different dimensions."""


class UnstableStep(QunravelError):
    """Fixed-step integration violated a trace/positivity tolerance or a step-size guard."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NotASimplexPoint(QunravelError):
    """An occupation vector is not a valid probability vector."""


class InsufficientSamples(QunravelError):
    """Too few trajectories for the requested statistical check."""


class TooManyUndecided(QunravelError):
    """More trajectories than allowed failed to settle into a spectral subspace."""


class GridMismatch(QunravelError):
    """Two time series do not share the same time grid."""


class ImpossibleOutcome(QunravelError):
    """A probe outcome with (numerically) zero probability was requested."""


class UnresolvedRuns(QunravelError):
    """Too many repeated probe runs did not purify within the probe budget."""


class ConfigError(QunravelError):
    """An experiment configuration is malformed or incomplete."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
