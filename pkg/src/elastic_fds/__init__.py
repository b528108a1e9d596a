"""Galerkin boundary elements for 2D elastic wave transmission with a fast direct solver."""
from .analytic import AnalyticCircleSolution, analytic_circle_solution
from .assembly import BlockSystem, Formulation, FunctionSet, IncidentWave, gram_matrices
from .compression import (CellFactor, IDResult, RankDeficiencyError, compress_cell,
                          compute_left_coeff, compute_right_coeff, cpqr_id_columns,
                          interpolation_coeff, rank_schedule, skeleton_block)
from .geometry import (BoundaryMesh, ClusterTree, ProxySurface, build_proxy, build_tree,
                       make_circle_mesh, make_square_mesh, read_mesh, write_mesh)
from .kernels import Material, green_displacement, hankel1, kernel_T, kernel_Tstar
from .solver import (BoundarySolution, ConvRefused, FDSFactorization, back_substitute,
                     compress_level, factorize_fds, solve_additional_rhs, solve_dense, solve_fds)

__all__ = [
    "AnalyticCircleSolution", "analytic_circle_solution", "BlockSystem", "Formulation",
    "FunctionSet", "IncidentWave", "gram_matrices", "CellFactor", "IDResult",
    "RankDeficiencyError", "compress_cell", "compute_left_coeff", "compute_right_coeff",
    "cpqr_id_columns", "interpolation_coeff", "rank_schedule", "skeleton_block", "BoundaryMesh",
    "ClusterTree", "ProxySurface", "build_proxy", "build_tree", "make_circle_mesh",
    "make_square_mesh", "read_mesh", "write_mesh", "Material", "green_displacement", "hankel1",
    "kernel_T", "kernel_Tstar", "BoundarySolution", "ConvRefused", "FDSFactorization",
    "back_substitute", "compress_level", "factorize_fds", "solve_additional_rhs", "solve_dense",
    "solve_fds",
]
