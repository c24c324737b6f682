"""End-to-end coarsening runs and deterministic per-stage seeding.

One user-facing seed fans out to independent per-stage seeds through a
counter-based split, so any stage (clustering init, eigensolver start
vector) can be reproduced in isolation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .combinatorial import CoarseningAssignment, EdgeDistanceGraph, edge_distances, kmedioids
from .eigen import EigenBasis, smallest_k
from .errors import DimensionMismatch
from .optimize import CoarsenedOperator, OptimizerConfig, optimize
from .sparse_core import DiagonalMass, SparseSymMatrix

_STAGE_IDS = {
    "kmedoids": 1,
    "eigen_fine": 2,
    "eigen_coarse": 3,
}


def stage_seed(seed: int, stage: str, level: int = 0) -> int:
    """Independent deterministic seed for one pipeline stage (and hierarchy level)."""
    ss = np.random.SeedSequence([int(seed), _STAGE_IDS[stage], int(level)])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class CoarsenResult:
    graph: EdgeDistanceGraph
    assignment: CoarseningAssignment
    basis: EigenBasis
    coarse: CoarsenedOperator

    @property
    def roots(self) -> np.ndarray:
        return self.assignment.root_of


def run_coarsen(L: SparseSymMatrix, M: DiagonalMass, m: int, k: int, seed: int = 0,
                config: OptimizerConfig | None = None,
                dist_exponent: float | None = None,
                level: int = 0) -> CoarsenResult:
    """Cluster, solve the fine eigenproblem, and optimize the coarse operator.

    Warns when m <= 2k: too few root nodes leave the optimization
    without the degrees of freedom to capture the requested modes.
    """
    n = L.dim
    if m >= n:
        raise DimensionMismatch(f"m={m} must be smaller than the operator size n={n}")
    if k >= n:
        raise DimensionMismatch(f"k={k} must be smaller than the operator size n={n}")
    if m <= 2 * k:
        warnings.warn(
            f"m={m} <= 2*k={2 * k}: choose m > 2*k root nodes for reliable "
            "preservation of the requested modes", RuntimeWarning, stacklevel=2)
    config = config or OptimizerConfig()
    if config.k is None:
        config = replace(config, k=k)

    graph = edge_distances(L, M, dist_exponent=dist_exponent)
    assignment = kmedioids(graph, m, seed=stage_seed(seed, "kmedoids", level))
    basis = smallest_k(L, M, k, seed=stage_seed(seed, "eigen_fine", level))
    coarse = optimize(L, M, assignment, basis, config)
    coarse.validate(fine_mass_total=M.total(), fine_null_dim=basis.null_dim)
    return CoarsenResult(graph=graph, assignment=assignment, basis=basis, coarse=coarse)
