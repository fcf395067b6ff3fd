"""Exception hierarchy shared by every solver in the package."""


class AOptError(Exception):
    """Base class for all package errors."""


class DomainError(AOptError, ValueError):
    """Linear predictor outside the admissible domain of the link/family."""


class MissingHook(AOptError):
    """A custom family or link was used without the required callable."""


class RankError(AOptError):
    """Model matrix does not have full column rank."""


class SingularError(AOptError):
    """Fisher information is singular where a nonsingular one is required."""


class WeightError(AOptError, ValueError):
    """Invalid weight (e.g. lifting a coordinate that already holds all mass)."""


class DegenerateError(AOptError):
    """A lift-one direction carries no information (A = B = 0)."""


class InfeasibleError(AOptError):
    """No design with positive determinant could be formed."""


class NonConvergence(AOptError):
    """Iteration cap reached before the convergence test passed."""


class NonDifferentiableError(AOptError):
    """Gradient requested for a basis term that is not smooth."""


class SeparationError(AOptError):
    """Maximum-likelihood estimate diverges (complete or quasi separation)."""


class AllocationError(AOptError, ValueError):
    """Requested stratum allocation exceeds the stratum size."""
