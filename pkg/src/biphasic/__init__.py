"""Finite-element solver and well-posedness audit for a steady biphasic
(fluid/solid/pressure) mixture with deformation-dependent resistivity."""
from .assembly import LoadData, SolutionTriple, assemble, energy_pairing, make_spaces, y_norm
from .estimator import BiphasicSolver
from .mesh import Mesh, generate_unit_ball, generate_unit_square, load_mesh, save_mesh
from .params import (
    DataNorms,
    FunctionalConstants,
    NondimParams,
    PhysicalParams,
    check_theorems,
)
from .resistivity import Constant, DilatationAffine, DisplacementAnisotropic, Truncated
from .solver import picard_case_a, picard_case_b, solve_linear, solve_truncated_continuation

__version__ = "0.1.0"
