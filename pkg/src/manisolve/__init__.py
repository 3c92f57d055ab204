"""First-order SQP for equality-constrained optimization, with a Riemannian
gradient-descent comparator and numerical checks of its convergence theory."""

from .errors import (DegenerateTangentError, InsufficientDataError, ManisolveError,
                     MissingDerivativeError, NonPositiveCurvatureError, RankDeficientError,
                     RetractionError)
from .geometry import (GeometryFrame, SpectralSummary, frame_at, hessian_spectrum,
                       pseudoinverse, riemannian_hessian, tangent_basis, tangent_normal_split)
from .problem import (EigenInstance, Problem, check_derivatives, eigenvalue_problem,
                      make_instance, random_quadratic_problem, sample_initialization)
from .riemannian import RetractionConfig, RetractionMode, project_to_manifold, retract, run_rgd
from .sqp import (IterateRecord, SolverConfig, Termination, Trajectory, canonical_stepsize,
                  experiment_stepsize, run_sqp, spectrum_at, sqp_step, stepsize)

__version__ = "0.1.0"
