"""Exception types raised by the solvers and geometry routines."""


class ManisolveError(Exception):
    """Base class for all package errors."""


class RankDeficientError(ManisolveError, ValueError):
    """The constraint Jacobian lost full row rank (constraint qualification failed)."""


class MissingDerivativeError(ManisolveError, ValueError):
    """A second-derivative callable required by the operation is absent."""


class NonPositiveCurvatureError(ManisolveError, ValueError):
    """The Riemannian Hessian has no positive curvature on the tangent space."""


class DegenerateTangentError(ManisolveError, ValueError):
    """The tangent space is trivial (as many constraints as variables)."""


class RetractionError(ManisolveError, RuntimeError):
    """Gauss-Newton retraction did not reach the feasibility tolerance."""


class InsufficientDataError(ManisolveError, ValueError):
    """Too few trajectory records to compute the requested statistic."""
