"""Low-order Reissner-Mindlin plate solver with a guaranteed a posteriori estimator."""
from .fem import ModelParams, SolverError, assemble, shear_recovery, solve
from .mesh import Mesh, build_mesh

__all__ = ["Mesh", "ModelParams", "SolverError", "assemble", "build_mesh", "shear_recovery", "solve"]
__version__ = "0.1.0"
