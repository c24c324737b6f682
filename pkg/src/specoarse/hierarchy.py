"""Multilevel coarsening: apply the full pipeline recursively.

Each level reruns clustering, eigensolve, and optimization on the
previous level's coarse operator and mass (eigenbases are recomputed
per level, never restricted from level 0), and composes the root
selections so every level's nodes trace back to level-0 indices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .eigen import EigenBasis, smallest_k
from .errors import DimensionMismatch
from .optimize import OptimizerConfig
from .pipeline import CoarsenResult, run_coarsen, stage_seed
from .sparse_core import DiagonalMass, SparseSymMatrix


@dataclass(frozen=True)
class HierarchyLevel:
    L: SparseSymMatrix
    M: DiagonalMass
    result: CoarsenResult | None   # None at level 0
    roots_to_level0: np.ndarray    # this level's nodes as level-0 node indices

    @property
    def dim(self) -> int:
        return self.L.dim


@dataclass(frozen=True)
class Hierarchy:
    levels: list[HierarchyLevel]

    @property
    def sizes(self) -> list[int]:
        return [lvl.dim for lvl in self.levels]

    def level_basis(self, level: int, k: int, seed: int = 0) -> EigenBasis:
        lvl = self.levels[level]
        return smallest_k(lvl.L, lvl.M, k, seed=stage_seed(seed, "eigen_coarse", level))


def build(L: SparseSymMatrix, M: DiagonalMass, sizes, k, config: OptimizerConfig | None = None,
          seed: int = 0, dist_exponent: float | None = None,
          allow_small_m: bool = False) -> Hierarchy:
    """Build a strictly shrinking operator hierarchy.

    ``sizes`` lists the coarse dimensions below the input; ``k`` is an
    int shared by all levels or one int per level. Every requested size
    must exceed twice its level's k unless ``allow_small_m`` overrides
    the guidance.
    """
    sizes = [int(s) for s in sizes]
    if sizes and sizes[0] == L.dim:
        sizes = sizes[1:]  # a leading size equal to n just names level 0
    if any(b >= a for a, b in zip([L.dim] + sizes, sizes)):
        raise DimensionMismatch(f"sizes must strictly descend from n={L.dim}: {sizes}")
    ks = [int(k)] * len(sizes) if np.isscalar(k) else [int(v) for v in k]
    if len(ks) != len(sizes):
        raise DimensionMismatch(f"{len(ks)} k values for {len(sizes)} levels")
    for m_level, k_level in zip(sizes, ks):
        if m_level <= 2 * k_level and not allow_small_m:
            raise DimensionMismatch(
                f"level size m={m_level} must exceed 2*k={2 * k_level} "
                "(pass allow_small_m to override)")

    levels = [HierarchyLevel(L=L, M=M, result=None,
                             roots_to_level0=np.arange(L.dim))]
    null_dim = None
    for level_idx, (m_level, k_level) in enumerate(zip(sizes, ks), start=1):
        prev = levels[-1]
        try:
            result = run_coarsen(prev.L, prev.M, m_level, k_level, seed=seed,
                                 config=config, dist_exponent=dist_exponent,
                                 level=level_idx)
        except Exception as exc:
            if hasattr(exc, "add_note"):
                exc.add_note(f"while building hierarchy level {level_idx}")
            raise
        if null_dim is None:
            null_dim = result.basis.null_dim
        elif result.basis.null_dim != null_dim:
            warnings.warn(
                f"level {level_idx}: null dimension {result.basis.null_dim} "
                f"differs from level 1's {null_dim}", RuntimeWarning, stacklevel=2)
        levels.append(HierarchyLevel(
            L=result.coarse.L_coarse, M=result.coarse.M_coarse, result=result,
            roots_to_level0=prev.roots_to_level0[result.assignment.root_of]))
    return Hierarchy(levels=levels)
