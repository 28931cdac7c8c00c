"""Exception hierarchy shared by all modules."""


class RiemstabError(Exception):
    """Base class for library errors."""


class InvalidInputError(RiemstabError, ValueError):
    """A point, tangent vector or argument violates its invariants."""


class DegenerateInputError(InvalidInputError):
    """Input is degenerate (zero vector, antipodal midpoint, ...)."""


class NoUniqueGeodesicError(RiemstabError):
    """No unique minimizing geodesic joins the two points."""


class ChartDomainError(RiemstabError, ValueError):
    """Point lies outside the domain of a coordinate chart."""


class ConvergenceError(RiemstabError):
    """An iterative procedure did not converge."""


class AccuracyNotAttainedError(ConvergenceError):
    """Step refinement hit its floor before reaching the requested accuracy."""
