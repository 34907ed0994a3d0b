"""Finite element minimisation of the fixed-field Ginzburg-Landau energy."""

from .errors import (
    AlignmentError, CapacityError, ConfigurationError, ConvergenceError, EscapeError,
    GLFemError, InputError, NumericalError, StructuralError,
)
from .fe_space import (
    ComplexField, FESpace, build_space, eval_basis, nodal_interpolate, oswald_interpolate,
    prolongate, quadrature,
)
from .gl_model import (
    ModelParams, assemble_energy, assemble_gradient, assemble_hessian, assemble_xz_matrix,
    initial_guess, potential,
)
from .mesh import Mesh, build_uniform, element_map, patch, refine
from .optimizer import SolverConfig, ncg_minimize, verify_minimizer

__version__ = "0.1.0"
