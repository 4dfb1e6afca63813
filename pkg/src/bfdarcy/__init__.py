"""Adaptive mixed finite elements for coupled Brinkman-Forchheimer / Darcy flow."""
from .adapt import AdaptConfig, mark, run, solve_level
from .assembly import AssembledSystem, ProblemCoefficients
from .estimator import EstimatorField, estimate
from .mesh import CoupledMesh, MeshError, build_structured, refine, refine_uniform
from .metrics import ConvergenceRecord, error_norms, rate
from .nlsolve import NewtonConfig, NewtonDivergence, solve
from .problems import example1, example2, example3, get_problem
from .spaces import BoundaryConditions, CoupledSolution, DofLayout

__version__ = "0.1.0"
