"""Spectral preservation metrics: functional map, diagonality, eigenvalue alignment.

The functional map is the coarse-mass-weighted inner product of the
coarse eigenvectors with the restricted fine eigenvectors; the closer
it is to the identity, the better the coarse operator preserves the
fine eigenvectors. Scalars quantifying the picture: an off-diagonal
mass ratio (sign-flip invariant, but not rotation invariant inside
eigenvalue multiplicity groups) and per-group subspace alignments
(which are the authoritative score for degenerate spectra).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .eigen import EigenBasis, zero_threshold
from .errors import DimensionMismatch
from .sparse_core import DiagonalMass


@dataclass(frozen=True)
class FunctionalMap:
    """Dense comparison matrix; rows follow coarse modes, columns fine modes."""

    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", np.asarray(self.C, dtype=np.float64))
        if not np.all(np.isfinite(self.C)):
            raise DimensionMismatch("functional map has non-finite entries")

    @property
    def shape(self):
        return self.C.shape

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.C:
                writer.writerow([repr(float(v)) for v in row])


def functional_map(fine: EigenBasis, coarse: EigenBasis, roots: np.ndarray,
                   coarse_mass: DiagonalMass, k: int) -> FunctionalMap:
    """Coarse-mass inner products of coarse modes with restricted fine modes."""
    if k > fine.k or k > coarse.k:
        raise DimensionMismatch(
            f"k={k} exceeds available modes (fine {fine.k}, coarse {coarse.k})")
    roots = np.asarray(roots, dtype=np.int64)
    if coarse.n != roots.size or coarse_mass.dim != roots.size:
        raise DimensionMismatch("coarse basis, mass, and root count disagree")
    restricted = fine.vectors[roots, :k]
    C = coarse.vectors[:, :k].T @ (coarse_mass.diag[:, None] * restricted)
    return FunctionalMap(C=C)


def offdiag_ratio(C) -> float:
    """Off-diagonal Frobenius mass over total, on the leading square block.

    0 iff the block is exactly diagonal; invariant to per-mode sign
    flips, but not to rotations within multiplicity groups (use
    grouped_alignment for degenerate spectra).
    """
    C = C.C if isinstance(C, FunctionalMap) else np.asarray(C, dtype=np.float64)
    s = min(C.shape)
    block = C[:s, :s]
    off = block - np.diag(np.diag(block))
    total = np.linalg.norm(block)
    return float(np.linalg.norm(off) / max(total, 1e-300))


def eigenvalue_groups(values: np.ndarray, gap_tol: float = 1e-3) -> list[tuple[int, int]]:
    """Half-open index ranges of eigenvalues separated by relative gaps > gap_tol.

    The gap denominator is floored at the null-space threshold so that
    numerically-zero modes land in a single group.
    """
    values = np.asarray(values, dtype=np.float64)
    floor = zero_threshold(values)
    groups = []
    start = 0
    for i in range(1, values.size):
        denom = max(abs(values[i]), abs(values[i - 1]), floor)
        if (values[i] - values[i - 1]) / denom > gap_tol:
            groups.append((start, i))
            start = i
    groups.append((start, values.size))
    return groups


@dataclass(frozen=True)
class GroupScore:
    start: int
    stop: int
    fine_value: float
    score: float


def grouped_alignment(fine: EigenBasis, coarse: EigenBasis, roots: np.ndarray,
                      coarse_mass: DiagonalMass, k: int | None = None,
                      gap_tol: float = 1e-3) -> list[GroupScore]:
    """Subspace alignment per eigenvalue group, in [0, 1].

    For each group of near-equal fine eigenvalues, compares the span of
    the restricted fine modes with the span of the matching coarse
    modes under the coarse-mass inner product: the mean squared cosine
    of the principal angles. 1 means the subspaces coincide; a random
    subspace scores about group_size / m.
    """
    k_use = min(fine.k, coarse.k) if k is None else k
    if k_use > fine.k or k_use > coarse.k:
        raise DimensionMismatch(f"k={k_use} exceeds available modes")
    roots = np.asarray(roots, dtype=np.int64)
    w = coarse_mass.diag
    scores = []
    for start, stop in eigenvalue_groups(fine.values[:k_use], gap_tol):
        g = stop - start
        X = fine.vectors[roots, start:stop]
        Y = coarse.vectors[:, start:stop]     # already coarse-mass orthonormal
        gram = X.T @ (w[:, None] * X)
        evals, evecs = np.linalg.eigh(gram)
        keep = evals > 1e-12 * max(evals[-1], 1e-300)
        if not np.any(keep):
            scores.append(GroupScore(start, stop, float(fine.values[start]), 0.0))
            continue
        whitener = evecs[:, keep] / np.sqrt(evals[keep])
        X_on = X @ whitener
        cross = Y.T @ (w[:, None] * X_on)
        score = min(1.0, float(np.sum(cross * cross)) / g)
        scores.append(GroupScore(start, stop, float(fine.values[start]), score))
    return scores


@dataclass(frozen=True)
class EigenvalueComparison:
    indices: np.ndarray
    fine: np.ndarray
    coarse: np.ndarray
    rel_error: np.ndarray

    def summary(self, start: int = 0, stop: int | None = None) -> dict:
        ref = self.rel_error[start:stop]
        if ref.size == 0:
            raise DimensionMismatch("empty mode range")
        return {"median": float(np.median(ref)), "max": float(ref.max())}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "fine", "coarse", "rel_error"])
            for i, f, c, e in zip(self.indices, self.fine, self.coarse, self.rel_error):
                writer.writerow([int(i), repr(float(f)), repr(float(c)), repr(float(e))])


def eigenvalue_compare(fine: EigenBasis, coarse: EigenBasis,
                       k: int | None = None) -> EigenvalueComparison:
    """Pair eigenvalues by index with a zero-mode-safe relative error.

    The error denominator is max(fine value, first above-null fine
    value), so zero modes pair at zero error instead of dividing by
    zero.
    """
    k_use = min(fine.k, coarse.k) if k is None else k
    if k_use > fine.k or k_use > coarse.k:
        raise DimensionMismatch(f"k={k_use} exceeds available modes")
    f = fine.values[:k_use]
    c = coarse.values[:k_use]
    anchor_idx = min(fine.null_dim, k_use - 1)
    anchor = max(abs(float(f[anchor_idx])), 1e-300)
    denom = np.maximum(np.abs(f), anchor)
    return EigenvalueComparison(
        indices=np.arange(k_use), fine=f.copy(), coarse=c.copy(),
        rel_error=np.abs(c - f) / denom)


def render_heatmap(C, path):
    """8-bit grayscale PNG, one pixel per entry, scaled by the largest diagonal magnitude."""
    C = C.C if isinstance(C, FunctionalMap) else np.asarray(C, dtype=np.float64)
    if not np.all(np.isfinite(C)):
        raise DimensionMismatch("cannot render non-finite matrix")
    s = min(C.shape)
    scale = float(np.abs(np.diag(C[:s, :s])).max(initial=0.0))
    if scale == 0.0:
        pixels = np.zeros(C.shape, dtype=np.uint8)
    else:
        pixels = np.rint(255.0 * np.minimum(np.abs(C) / scale, 1.0)).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(path, format="PNG")


@dataclass(frozen=True)
class PreservationReport:
    """Bundle of the metrics, serializable to a versioned JSON dict."""

    offdiag: float
    diag_magnitudes: np.ndarray
    eigenvalues: EigenvalueComparison
    group_scores: list[GroupScore]
    block_ratios: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "metric_version": 1,
            "offdiag_ratio": self.offdiag,
            "diag_magnitudes": [float(v) for v in self.diag_magnitudes],
            "eigenvalue_errors": self.eigenvalues.summary(),
            "group_scores": [
                {"start": g.start, "stop": g.stop,
                 "fine_value": g.fine_value, "score": g.score}
                for g in self.group_scores],
            "block_offdiag_ratios": self.block_ratios,
        }


def build_report(fine: EigenBasis, coarse: EigenBasis, roots: np.ndarray,
                 coarse_mass: DiagonalMass, k: int,
                 gap_tol: float = 1e-3) -> tuple[FunctionalMap, PreservationReport]:
    fmap = functional_map(fine, coarse, roots, coarse_mass, k)
    C = fmap.C
    s = min(C.shape)
    half = s // 2
    block_ratios = {}
    if half >= 1:
        block_ratios = {
            "leading_half": offdiag_ratio(C[:half, :half]),
            "trailing_half": offdiag_ratio(C[half:s, half:s]),
        }
    report = PreservationReport(
        offdiag=offdiag_ratio(C),
        diag_magnitudes=np.abs(np.diag(C[:s, :s])),
        eigenvalues=eigenvalue_compare(fine, coarse, k),
        group_scores=grouped_alignment(fine, coarse, roots, coarse_mass, k, gap_tol),
        block_ratios=block_ratios)
    return fmap, report
