"""Interpolation-matrix optimization and coarse operator assembly.

The coarse operator is the Galerkin product of a sparse interpolation
matrix whose entries live on a fixed pattern derived from the
clustering. The objective is the mass-weighted mismatch between the two
paths of the restriction diagram (apply the fine operator then
restrict, versus restrict then apply the coarse operator) over the
first k eigenvectors; it is minimized with NADAM under the linear
constraint that restricted null-space vectors interpolate back to
themselves, which pins the coarse null space exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.sparse as sp

from .combinatorial import CoarseningAssignment, cluster_adjacency, sparsity_patterns
from .eigen import EigenBasis, zero_threshold
from .errors import (DimensionMismatch, DivergenceError,
                     InfeasibleConstraintError, SupportViolationError)
from .sparse_core import (DiagonalMass, SparseSymMatrix, SparsityPattern,
                          canonical_csr)


@dataclass(frozen=True)
class OptimizerConfig:
    """Fixed-step NADAM settings.

    The step size and the stall window follow the method's reference
    values (0.02 and 10 iterations without improvement); the moment
    parameters are the optimizer's conventional defaults. ``k`` caps how
    many eigenvectors enter the objective (None: all of the basis).
    """

    gamma: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    stall_window: int = 10
    max_iters: int = 1000
    k: int | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.stall_window < 1:
            raise ValueError("stall_window must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class NadamState:
    step: int
    first_moment: np.ndarray
    second_moment: np.ndarray

    @classmethod
    def zeros(cls, size: int) -> "NadamState":
        return cls(step=0, first_moment=np.zeros(size), second_moment=np.zeros(size))


def nadam_step(grad: np.ndarray, state: NadamState, config: OptimizerConfig) -> np.ndarray:
    """One NADAM update direction (to be applied as x <- x - gamma * step).

    Bias-corrected moments plus the Nesterov look-ahead term on the raw
    gradient; with a constant gradient the direction converges to the
    sign-like normalized step.
    """
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    state.first_moment = b1 * state.first_moment + (1 - b1) * grad
    state.second_moment = b2 * state.second_moment + (1 - b2) * grad * grad
    first_hat = state.first_moment / (1 - b1 ** t)
    second_hat = state.second_moment / (1 - b2 ** t)
    lookahead = (1 - b1) / (1 - b1 ** t) * grad
    return (b1 * first_hat + lookahead) / (np.sqrt(second_hat) + config.epsilon)


@dataclass(frozen=True)
class InterpolationMatrix:
    """Sparse interpolation values pinned to a fixed pattern."""

    pattern: SparsityPattern
    values: np.ndarray  # aligned with the pattern's CSR data order

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (self.pattern.nnz,):
            raise DimensionMismatch(
                f"{self.values.shape[0]} values for a pattern of {self.pattern.nnz} entries")

    @property
    def shape(self):
        return self.pattern.shape

    def to_csr(self) -> sp.csr_array:
        mask = self.pattern.mask
        return sp.csr_array((self.values.copy(), mask.indices.copy(),
                             mask.indptr.copy()), shape=mask.shape)

    def constraint_residual(self, coarse_null: np.ndarray, fine_null: np.ndarray) -> float:
        if coarse_null.size == 0:
            return 0.0
        return float(np.abs(self.to_csr() @ coarse_null - fine_null).max())


@dataclass(frozen=True)
class EnergyPrecomp:
    """Constant factors of the objective for one (operator, clustering, basis) triple."""

    operator: sp.csr_array        # n x n
    pattern: SparsityPattern      # interpolation pattern, n x m
    coarse_pattern: SparsityPattern  # allowed coarse fill, m x m
    entry_rows: np.ndarray
    entry_cols: np.ndarray
    mass_coarse: np.ndarray       # (m,) lumped cluster masses
    target: np.ndarray            # (m, k) restriction of mass-inverse operator image
    restricted: np.ndarray        # (m, k) restriction of the basis
    gram: np.ndarray              # (m, m) restricted @ restricted.T
    null_fine: np.ndarray         # (n, c)
    null_coarse: np.ndarray       # (m, c)
    roots: np.ndarray

    @property
    def n(self) -> int:
        return self.pattern.shape[0]

    @property
    def m(self) -> int:
        return self.pattern.shape[1]


def precompute(L: SparseSymMatrix, M: DiagonalMass, assignment: CoarseningAssignment,
               basis: EigenBasis, k: int | None = None) -> EnergyPrecomp:
    n, m = L.dim, assignment.m
    if assignment.n != n or M.dim != n or basis.n != n:
        raise DimensionMismatch("operator, mass, assignment, and basis sizes disagree")
    if not np.array_equal(basis.mass.diag, M.diag):
        raise DimensionMismatch("eigenbasis was computed with a different mass")
    k_use = basis.k if k is None else int(k)
    if not (1 <= k_use <= basis.k):
        raise DimensionMismatch(f"need 1 <= k <= {basis.k}, got {k_use}")

    roots = assignment.root_of
    vectors = basis.vectors[:, :k_use]
    image = (L.mat @ vectors) / M.diag[:, None]
    membership = assignment.membership_pattern()
    adjacency = cluster_adjacency(membership, L.pattern())
    interp_pattern, coarse_pattern = sparsity_patterns(membership, adjacency)
    mask = interp_pattern.mask
    entry_rows = np.repeat(np.arange(n), np.diff(mask.indptr))
    mass_coarse = np.bincount(assignment.cluster_of, weights=M.diag, minlength=m)

    null_fine = basis.null_vectors()
    restricted = vectors[roots]
    return EnergyPrecomp(
        operator=L.mat, pattern=interp_pattern, coarse_pattern=coarse_pattern,
        entry_rows=entry_rows, entry_cols=mask.indices.copy(),
        mass_coarse=mass_coarse, target=image[roots], restricted=restricted,
        gram=restricted @ restricted.T, null_fine=null_fine,
        null_coarse=null_fine[roots], roots=roots)


def _values_to_csr(values: np.ndarray, pre: EnergyPrecomp) -> sp.csr_array:
    mask = pre.pattern.mask
    return sp.csr_array((values, mask.indices, mask.indptr), shape=mask.shape)


def galerkin_values(pre: EnergyPrecomp, assignment: CoarseningAssignment) -> np.ndarray:
    """Transposed cluster membership expressed on the interpolation pattern."""
    return (pre.entry_cols == assignment.cluster_of[pre.entry_rows]).astype(np.float64)


def energy(values: np.ndarray, pre: EnergyPrecomp) -> float:
    """Half the coarse-mass-weighted squared mismatch of the restriction diagram."""
    G = _values_to_csr(values, pre)
    coarse_image = (G.T @ (pre.operator @ (G @ pre.restricted)))
    coarse_image /= pre.mass_coarse[:, None]
    resid = pre.target - coarse_image
    return 0.5 * float(np.einsum("i,ij,ij->", pre.mass_coarse, resid, resid))


def sparse_gradient(values: np.ndarray, pre: EnergyPrecomp) -> np.ndarray:
    """Objective gradient on the interpolation pattern only.

    Entry (i, j) is the dot product of row i of (operator @ G) with
    column j of a small dense factor; the factor is m-by-m, which stays
    cheap because coarsening is aggressive (m much below n).
    """
    G = _values_to_csr(values, pre)
    image = sp.csr_array(pre.operator @ G)          # n x m
    coarse_quad = (G.T @ image).toarray()           # m x m, symmetric up to rounding
    left = (coarse_quad / pre.mass_coarse[:, None]) @ pre.gram
    right = pre.gram @ (coarse_quad / pre.mass_coarse[None, :])
    factor = (left + right
              - pre.target @ pre.restricted.T
              - pre.restricted @ pre.target.T)
    dense = image @ factor
    return np.ascontiguousarray(dense[pre.entry_rows, pre.entry_cols])


def project_nullspace(values: np.ndarray, pre: EnergyPrecomp,
                      tol: float = 1e-10) -> np.ndarray:
    """Nearest pattern-respecting values satisfying the null-space constraint.

    The constraint decouples per interpolation row, so the orthogonal
    projection is a per-row least-norm correction; for a single null
    vector it reduces to an element-wise rescaled subtraction. Rows
    whose support misses every nonzero of the restricted null basis
    make the constraint infeasible and raise, identifying the row.
    """
    coarse_null, fine_null = pre.null_coarse, pre.null_fine
    c = coarse_null.shape[1] if coarse_null.ndim == 2 else 0
    if c == 0:
        return values.copy()
    n = pre.n
    scale = max(1.0, float(np.abs(fine_null).max()))

    if c == 1:
        v = coarse_null[:, 0]
        phi = fine_null[:, 0]
        vcol = v[pre.entry_cols]
        applied = np.bincount(pre.entry_rows, weights=values * vcol, minlength=n)
        denom = np.bincount(pre.entry_rows, weights=vcol * vcol, minlength=n)
        resid = applied - phi
        dead = denom == 0
        if np.any(dead & (np.abs(resid) > tol * scale)):
            raise InfeasibleConstraintError(int(np.argmax(dead & (np.abs(resid) > tol * scale))))
        coef = np.divide(resid, denom, out=np.zeros_like(resid), where=~dead)
        out = values - coef[pre.entry_rows] * vcol
    else:
        mask = pre.pattern.mask
        out = values.copy()
        for i in range(n):
            lo, hi = mask.indptr[i], mask.indptr[i + 1]
            support = mask.indices[lo:hi]
            block = coarse_null[support, :].T        # c x s
            resid = block @ out[lo:hi] - fine_null[i]
            if not np.any(block):
                if np.abs(resid).max(initial=0.0) > tol * scale:
                    raise InfeasibleConstraintError(i)
                continue
            delta, *_ = np.linalg.lstsq(block, resid, rcond=None)
            out[lo:hi] -= delta

    residual = np.abs(_values_to_csr(out, pre) @ coarse_null - fine_null)
    # Achievable accuracy degrades with the magnitudes actually summed.
    cancellation = float(np.abs(out).max(initial=0.0)) * float(np.abs(coarse_null).max(initial=0.0))
    if residual.max(initial=0.0) > tol * max(scale, cancellation):
        worst = int(np.argmax(residual.max(axis=1)))
        raise InfeasibleConstraintError(
            worst, f"null-space constraint residual {residual.max():g} after "
            f"projection (row {worst})")
    return out


@dataclass(frozen=True)
class CoarsenedOperator:
    """Coarse operator, lumped mass, interpolation, and the run record."""

    L_coarse: SparseSymMatrix
    M_coarse: DiagonalMass
    interp: InterpolationMatrix
    assignment: CoarseningAssignment
    coarse_pattern: SparsityPattern
    coarse_null: np.ndarray
    energy_trace: np.ndarray  # rows (iteration, energy, best_energy)
    stalled: bool = False
    iterations: int = 0

    @property
    def m(self) -> int:
        return self.L_coarse.dim

    @property
    def initial_energy(self) -> float:
        return float(self.energy_trace[0, 1])

    @property
    def final_energy(self) -> float:
        return float(self.energy_trace[-1, 2])

    def validate(self, fine_mass_total: float | None = None,
                 fine_null_dim: int | None = None) -> "CoarsenedOperator":
        """Check the structural guarantees; cheap except the dense PSD eigensolve."""
        self.M_coarse.require_strictly_positive()
        if fine_mass_total is not None:
            if abs(self.M_coarse.total() - fine_mass_total) > 1e-12 * abs(fine_mass_total):
                raise SupportViolationError(
                    f"coarse mass {self.M_coarse.total():g} != fine mass {fine_mass_total:g}")
        if not self.coarse_pattern.covers(self.L_coarse.pattern()):
            raise SupportViolationError("coarse operator exceeds its allowed pattern")

        scale = max(self.L_coarse.max_abs(), 1e-300)
        if self.coarse_null.size:
            null_resid = np.abs(self.L_coarse.mat @ self.coarse_null).max()
            if null_resid > 1e-8 * scale:
                raise SupportViolationError(
                    f"null space not preserved: |L~ P@null| = {null_resid:g}")

        w = np.linalg.eigvalsh(self.L_coarse.to_dense() /
                               np.sqrt(np.outer(self.M_coarse.diag, self.M_coarse.diag)))
        if w[0] < -1e-8 * max(abs(w[-1]), 1e-300):
            raise SupportViolationError(f"coarse operator not PSD: min eigenvalue {w[0]:g}")
        if fine_null_dim is not None:
            coarse_null_dim = int(np.count_nonzero(np.abs(w) < zero_threshold(w)))
            if coarse_null_dim != fine_null_dim:
                warnings.warn(
                    f"coarse null dimension {coarse_null_dim} != fine {fine_null_dim}",
                    RuntimeWarning, stacklevel=2)
        return self


def assemble_coarse(interp: InterpolationMatrix, L: SparseSymMatrix, M: DiagonalMass,
                    assignment: CoarseningAssignment,
                    coarse_pattern: SparsityPattern | None = None,
                    coarse_null: np.ndarray | None = None,
                    energy_trace: np.ndarray | None = None,
                    stalled: bool = False, iterations: int = 0) -> CoarsenedOperator:
    """Galerkin products: coarse operator G^T L G and lumped mass.

    Entries of the product outside the allowed coarse pattern must
    vanish (they are structurally impossible when the interpolation
    respects its pattern); any significant leakage raises.
    """
    if coarse_pattern is None:
        adjacency = cluster_adjacency(assignment.membership_pattern(), L.pattern())
        _, coarse_pattern = sparsity_patterns(assignment.membership_pattern(), adjacency)
    G = interp.to_csr()
    product = canonical_csr(G.T @ (L.mat @ G))
    mask = coarse_pattern.mask
    leakage = product - product.multiply(mask)
    if leakage.nnz:
        worst = float(np.abs(leakage.data).max())
        if worst > 1e-12 * max(float(np.abs(product.data).max(initial=0.0)), 1e-300):
            raise SupportViolationError(
                f"Galerkin product leaks {worst:g} outside the coarse pattern")
        product = canonical_csr(product.multiply(mask))
    symmetric = canonical_csr((product + product.T) * 0.5)
    L_coarse = SparseSymMatrix(mat=symmetric, unit_exponent=L.unit_exponent)

    mass_coarse = np.bincount(assignment.cluster_of, weights=M.diag, minlength=assignment.m)
    M_coarse = DiagonalMass(diag=mass_coarse, unit_exponent=M.unit_exponent)

    if energy_trace is None:
        energy_trace = np.zeros((1, 3))
    if coarse_null is None:
        coarse_null = np.zeros((assignment.m, 0))
    return CoarsenedOperator(
        L_coarse=L_coarse, M_coarse=M_coarse, interp=interp, assignment=assignment,
        coarse_pattern=coarse_pattern, coarse_null=coarse_null,
        energy_trace=np.asarray(energy_trace, dtype=np.float64),
        stalled=stalled, iterations=iterations)


def optimize(L: SparseSymMatrix, M: DiagonalMass, assignment: CoarseningAssignment,
             basis: EigenBasis, config: OptimizerConfig | None = None) -> CoarsenedOperator:
    """Full stage-2 run: init, NADAM loop with projection, best-iterate return.

    Starts from the transposed membership projected feasible, stops when
    the best objective fails to improve (relative 1e-12) for
    ``stall_window`` consecutive iterations or at ``max_iters``, and
    assembles the coarse operator from the best iterate seen.
    """
    config = config or OptimizerConfig()
    pre = precompute(L, M, assignment, basis, config.k)
    values = project_nullspace(galerkin_values(pre, assignment), pre)
    best_energy = energy(values, pre)
    if not np.isfinite(best_energy):
        raise DivergenceError("initial objective is not finite")
    best_values = values.copy()
    trace = [(0.0, best_energy, best_energy)]

    state = NadamState.zeros(values.size)
    stall = 0
    stalled = False
    iterations = 0
    for it in range(1, config.max_iters + 1):
        grad = sparse_gradient(values, pre)
        step = nadam_step(grad, state, config)
        values = values - config.gamma * step
        values = project_nullspace(values, pre)
        e = energy(values, pre)
        if not np.isfinite(e):
            raise DivergenceError(
                f"objective diverged at iteration {it}; try a smaller step size "
                f"than gamma={config.gamma}")
        if (best_energy - e) > 1e-12 * abs(best_energy):
            best_energy = e
            best_values = values.copy()
            stall = 0
        else:
            stall += 1
        trace.append((float(it), e, best_energy))
        iterations = it
        if stall >= config.stall_window:
            stalled = True
            break

    interp = InterpolationMatrix(pattern=pre.pattern, values=best_values)
    return assemble_coarse(
        interp, L, M, assignment, coarse_pattern=pre.coarse_pattern,
        coarse_null=pre.null_coarse, energy_trace=np.asarray(trace),
        stalled=stalled, iterations=iterations)
