"""Spectral coarsening of sparse geometric operators.

Shrinks a sparse positive semi-definite operator (with its diagonal
mass) to a chosen smaller size while preserving its low-frequency
generalized eigenpairs, and quantifies the preservation through the
functional map between the fine and coarse eigenbases.
"""

import os as _os

# Honor the thread cap before any BLAS-backed import reads the environment.
_threads = _os.environ.get("SPECOARSE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from .combinatorial import (CoarseningAssignment, EdgeDistanceGraph,        # noqa: E402
                            cluster_adjacency, edge_distances, kmedioids,
                            multi_source_shortest_paths, sparsity_patterns)
from .eigen import EigenBasis, smallest_k, zero_threshold                   # noqa: E402
from .errors import SpecoarseError                                          # noqa: E402
from .evaluate import (FunctionalMap, PreservationReport, build_report,     # noqa: E402
                       eigenvalue_compare, functional_map, grouped_alignment,
                       offdiag_ratio, render_heatmap)
from .hierarchy import Hierarchy, build as build_hierarchy                  # noqa: E402
from .mesh_io import TriangleMesh, load_obj, validate as validate_mesh      # noqa: E402
from .operators import (OperatorPair, anisotropic_laplacian,                # noqa: E402
                        barycentric_mass, cotan_laplacian)
from .optimize import (CoarsenedOperator, InterpolationMatrix,              # noqa: E402
                       OptimizerConfig, assemble_coarse, energy, nadam_step,
                       optimize, precompute, project_nullspace, sparse_gradient)
from .pipeline import CoarsenResult, run_coarsen, stage_seed                # noqa: E402
from .sparse_core import (DiagonalMass, SparseSymMatrix, SparsityPattern,   # noqa: E402
                          pattern_product, read_matrix_market, spmm,
                          weighted_frobenius_sq, write_matrix_market)

__all__ = [
    "CoarsenResult", "CoarsenedOperator", "CoarseningAssignment", "DiagonalMass",
    "EdgeDistanceGraph", "EigenBasis", "FunctionalMap", "Hierarchy",
    "InterpolationMatrix", "OperatorPair", "OptimizerConfig", "PreservationReport",
    "SparseSymMatrix", "SparsityPattern", "SpecoarseError", "TriangleMesh",
    "anisotropic_laplacian", "assemble_coarse", "barycentric_mass",
    "build_hierarchy", "build_report", "cluster_adjacency", "cotan_laplacian",
    "edge_distances", "eigenvalue_compare", "energy", "functional_map",
    "grouped_alignment", "kmedioids", "load_obj", "multi_source_shortest_paths",
    "nadam_step", "offdiag_ratio", "optimize", "pattern_product", "precompute",
    "project_nullspace", "read_matrix_market", "render_heatmap", "run_coarsen",
    "smallest_k", "sparse_gradient", "sparsity_patterns", "spmm", "stage_seed",
    "validate_mesh", "weighted_frobenius_sq", "write_matrix_market",
    "zero_threshold",
]
