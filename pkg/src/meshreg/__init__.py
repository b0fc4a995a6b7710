"""Mesh-based solvers for nonparametric penalized regression.

Discretizes derivative penalties on a mesh with sparse difference
operators, interpolates observations from mesh fitted values with sparse
local-polynomial matrices, and solves the resulting l1-penalized convex
problem with a banded ADMM.
"""

from .diffops import (
    PenaltySpec,
    SparseBandedMatrix,
    averaging_matrix,
    difference_matrix,
    multivariate_penalty_operator,
    normalized_difference_matrix,
    penalty_null_basis,
)
from .errors import (
    FactorizationError,
    OutOfDomainError,
    RankDeficiencyError,
    SingularDesignError,
    SingularNeighborhoodError,
)
from .interp import (
    InterpolationPlan,
    mlp_matrix,
    mlp_matrix_multivariate,
    rising_polynomial_design,
    rising_polynomial_values,
    spline_matrix,
)
from .mesh import Mesh, TensorMesh, locate_cell, mesh_from_points, regular_mesh, tensor_mesh
from .penalty import MeshFunction, penalty_value
from .simulate import (
    StudyConfig,
    StudyRow,
    generate_bivariate,
    generate_univariate,
    run_rmse_study,
    study_to_csv,
    study_to_json,
)
from .solver import (
    ADMMOptions,
    FitResult,
    MBSProblem,
    admm_solve,
    kkt_residual,
    lambda_grid,
    lambda_max,
    soft_threshold,
    solve_path,
)

__version__ = "0.1.0"

__all__ = [
    "ADMMOptions",
    "FactorizationError",
    "FitResult",
    "InterpolationPlan",
    "MBSProblem",
    "Mesh",
    "MeshFunction",
    "OutOfDomainError",
    "PenaltySpec",
    "RankDeficiencyError",
    "SingularDesignError",
    "SingularNeighborhoodError",
    "SparseBandedMatrix",
    "StudyConfig",
    "StudyRow",
    "TensorMesh",
    "admm_solve",
    "averaging_matrix",
    "difference_matrix",
    "generate_bivariate",
    "generate_univariate",
    "kkt_residual",
    "lambda_grid",
    "lambda_max",
    "locate_cell",
    "mesh_from_points",
    "mlp_matrix",
    "mlp_matrix_multivariate",
    "multivariate_penalty_operator",
    "normalized_difference_matrix",
    "penalty_null_basis",
    "penalty_value",
    "regular_mesh",
    "rising_polynomial_design",
    "rising_polynomial_values",
    "run_rmse_study",
    "soft_threshold",
    "solve_path",
    "spline_matrix",
    "study_to_csv",
    "study_to_json",
    "tensor_mesh",
]
