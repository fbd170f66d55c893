"""Exception types shared across the library."""


class ToricExtError(Exception):
    """Base class for all library errors."""


class Unbounded(ToricExtError):
    """The facet inequalities describe an unbounded region."""


class EmptyInterior(ToricExtError):
    """The facet inequalities have no full-dimensional solution set."""


class NotDelzant(ToricExtError):
    """A vertex violates the unimodularity condition.

    Carries the offending vertex so callers can report it.
    """

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class InvalidTruncation(ToricExtError):
    """Corner cuts of a blow-up polytope overlap or exceed the square."""


class SingularGram(ToricExtError):
    """An affine Gram system was numerically singular."""


class NotPositiveDefinite(ToricExtError):
    """A symplectic potential failed its Hessian positivity check."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ToleranceNotMet(ToricExtError):
    """Adaptive quadrature hit its depth limit before the requested tolerance."""

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class PolytopeMismatch(ToricExtError):
    """Two potentials refer to different polytopes."""


class BasisMismatch(ToricExtError):
    """Two Gram weight vectors live on different lattice bases."""


class BudgetExceeded(ToricExtError):
    """A requested computation exceeds the configured size budget."""
