"""Nonconforming finite elements for diffusion with contrasted coefficients.

Crouzeix-Raviart, Nitsche, weighted symmetric interior penalty dG and hybrid
high-order discretisations of ``-div(lambda grad u) = f`` on triangulations of
the unit square, with contrast-robust face weights, error norms and a
convergence harness.
"""

from .coeffs import DiffusionField, FaceWeights, face_weights, lambda_face, theta_weights, weighted_average
from .forms import MethodConfig, assemble, default_penalty
from .harness import builtin_problem, run_convergence, sweep_contrast
from .hho import assemble_hho, hho_local, reconstruct_solution, solve_hho
from .linalg import CoercivityError, SolverError, solve_general, solve_spd
from .mesh import Mesh, MeshError, generate_structured, read_mesh, refine_uniform, write_mesh
from .norms import ErrorReport, augmented_seminorm, boundary_seminorm, energy_error, eoc, jump_seminorm

__version__ = "0.1.0"

__all__ = [
    "CoercivityError",
    "DiffusionField",
    "ErrorReport",
    "FaceWeights",
    "Mesh",
    "MeshError",
    "MethodConfig",
    "SolverError",
    "assemble",
    "assemble_hho",
    "augmented_seminorm",
    "boundary_seminorm",
    "builtin_problem",
    "default_penalty",
    "energy_error",
    "eoc",
    "face_weights",
    "generate_structured",
    "hho_local",
    "jump_seminorm",
    "lambda_face",
    "read_mesh",
    "reconstruct_solution",
    "refine_uniform",
    "run_convergence",
    "solve_general",
    "solve_hho",
    "solve_spd",
    "sweep_contrast",
    "theta_weights",
    "weighted_average",
    "write_mesh",
]
