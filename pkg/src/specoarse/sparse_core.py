"""Sparse symmetric matrices, diagonal masses, pattern algebra, and Matrix Market I/O.

Values are immutable after construction and all operations are pure, so
everything here is safe to share between threads. Canonical storage is
CSR with sorted indices, summed duplicates, and exact zeros dropped
(cancellation zeros are pruned at 0.0 exactly; there is no epsilon
pruning, to keep sparsity patterns deterministic).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, FormatError


def canonical_csr(mat) -> sp.csr_array:
    """Return ``mat`` as CSR with summed duplicates, sorted indices, no explicit zeros."""
    out = sp.csr_array(mat)
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def spmm(a, b) -> sp.csr_array:
    """Exact sparse-sparse product, canonicalized.

    Raises DimensionMismatch when the inner dimensions disagree.
    """
    a = sp.csr_array(a)
    b = sp.csr_array(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return canonical_csr(a @ b)


@dataclass(frozen=True)
class SparseSymMatrix:
    """A sparse symmetric real matrix with a unit exponent (power of length).

    Internally stores the full (both-triangle) CSR form so products are
    plain matrix products; the logical content is the upper-triangle
    entry set. Positive semi-definiteness is a property of *operator
    inputs*, validated where such inputs are loaded or constructed, not
    an invariant of this type.
    """

    mat: sp.csr_array
    unit_exponent: int = 0

    @classmethod
    def from_csr(cls, mat, unit_exponent: int = 0, sym_rtol: float = 0.0) -> "SparseSymMatrix":
        mat = canonical_csr(mat)
        if mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch(f"symmetric matrix must be square, got {mat.shape}")
        asym = (mat - mat.T).tocoo()
        if asym.nnz:
            scale = max(np.abs(mat.data).max(initial=0.0), 1e-300)
            worst = np.abs(asym.data).max()
            if worst > sym_rtol * scale:
                i = int(asym.row[np.argmax(np.abs(asym.data))])
                j = int(asym.col[np.argmax(np.abs(asym.data))])
                raise FormatError(
                    f"matrix is not symmetric: entries ({i},{j})/({j},{i}) "
                    f"differ by {worst:g}"
                )
            mat = canonical_csr((mat + mat.T) * 0.5)
        return cls(mat=mat, unit_exponent=unit_exponent)

    @classmethod
    def from_entries(cls, dim: int, rows, cols, vals, unit_exponent: int = 0) -> "SparseSymMatrix":
        """Build from entries given on one triangle; off-diagonal entries are mirrored.

        Each unordered index pair must appear at most once (repeated
        coordinates are summed, as in COO assembly).
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        off = rows != cols
        full_r = np.concatenate([rows, cols[off]])
        full_c = np.concatenate([cols, rows[off]])
        full_v = np.concatenate([vals, vals[off]])
        mat = sp.coo_array((full_v, (full_r, full_c)), shape=(dim, dim))
        return cls(mat=canonical_csr(mat), unit_exponent=unit_exponent)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def nnz(self) -> int:
        return self.mat.nnz

    def entries(self):
        """Canonical (row, col, value) triples of the upper triangle, sorted."""
        coo = self.mat.tocoo()
        keep = coo.row <= coo.col
        order = np.lexsort((coo.col[keep], coo.row[keep]))
        return coo.row[keep][order], coo.col[keep][order], coo.data[keep][order]

    def diagonal(self) -> np.ndarray:
        return self.mat.diagonal()

    def max_abs(self) -> float:
        return float(np.abs(self.mat.data).max(initial=0.0))

    def to_dense(self) -> np.ndarray:
        return self.mat.toarray()

    def pattern(self) -> "SparsityPattern":
        return SparsityPattern.from_matrix(self.mat)

    def allclose(self, other: "SparseSymMatrix", rtol: float = 1e-12) -> bool:
        diff = (self.mat - other.mat).tocoo()
        if diff.nnz == 0:
            return True
        scale = max(self.max_abs(), other.max_abs(), 1e-300)
        return bool(np.abs(diff.data).max() <= rtol * scale)


@dataclass(frozen=True)
class DiagonalMass:
    """Non-negative diagonal weighting with a unit exponent.

    Operator-input masses must be strictly positive; use
    :meth:`require_strictly_positive` at load/construction boundaries.
    """

    diag: np.ndarray
    unit_exponent: int = 0

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=np.float64)
        object.__setattr__(self, "diag", diag)
        if diag.ndim != 1:
            raise DimensionMismatch("mass diagonal must be a vector")
        if np.any(diag < 0):
            i = int(np.argmax(diag < 0))
            raise FormatError(f"negative mass entry at index {i}: {diag[i]:g}")

    @property
    def dim(self) -> int:
        return self.diag.shape[0]

    def require_strictly_positive(self):
        if np.any(self.diag <= 0):
            i = int(np.argmax(self.diag <= 0))
            raise FormatError(f"mass entry {i} is not strictly positive: {self.diag[i]:g}")
        return self

    def total(self) -> float:
        return float(self.diag.sum())

    def inverse_diag(self) -> np.ndarray:
        self.require_strictly_positive()
        return 1.0 / self.diag

    def to_csr(self) -> sp.csr_array:
        return sp.csr_array(sp.diags_array(self.diag))


def weighted_frobenius_sq(x: np.ndarray, w) -> float:
    """Squared Frobenius norm of ``x`` in the inner product of diagonal weights ``w``.

    ``w`` may be a DiagonalMass or a plain diagonal vector. Equals
    ``trace(x.T @ diag(w) @ x)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    diag = w.diag if isinstance(w, DiagonalMass) else np.asarray(w, dtype=np.float64)
    if diag.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"weights of dim {diag.shape[0]} vs matrix with {x.shape[0]} rows")
    return float(np.einsum("i,ij,ij->", diag, x, x))


@dataclass(frozen=True)
class SparsityPattern:
    """A binary sparsity pattern stored as a boolean CSR mask."""

    mask: sp.csr_array

    @classmethod
    def from_matrix(cls, mat) -> "SparsityPattern":
        mask = canonical_csr(mat).astype(bool)
        mask.sort_indices()
        return cls(mask=mask)

    @classmethod
    def from_positions(cls, shape, rows, cols) -> "SparsityPattern":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size and (rows.min() < 0 or rows.max() >= shape[0]
                          or cols.min() < 0 or cols.max() >= shape[1]):
            raise DimensionMismatch("pattern positions out of bounds")
        data = np.ones(rows.shape[0], dtype=bool)
        return cls.from_matrix(sp.coo_array((data, (rows, cols)), shape=shape))

    @classmethod
    def identity(cls, n: int) -> "SparsityPattern":
        return cls.from_matrix(sp.eye_array(n, format="csr"))

    @property
    def shape(self):
        return self.mask.shape

    @property
    def nnz(self) -> int:
        return self.mask.nnz

    def positions(self):
        coo = self.mask.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order]

    def transpose(self) -> "SparsityPattern":
        return SparsityPattern.from_matrix(self.mask.T)

    def with_diagonal(self) -> "SparsityPattern":
        if self.shape[0] != self.shape[1]:
            raise DimensionMismatch("diagonal union requires a square pattern")
        return SparsityPattern.from_matrix(self.mask + sp.eye_array(self.shape[0], format="csr"))

    def is_symmetric(self) -> bool:
        return self.shape[0] == self.shape[1] and (self.mask != self.mask.T).nnz == 0

    def covers(self, other: "SparsityPattern") -> bool:
        """True when every position of ``other`` is also present here."""
        if self.shape != other.shape:
            raise DimensionMismatch(f"pattern shapes {self.shape} vs {other.shape}")
        extra = other.mask.astype(np.int8) - self.mask.astype(np.int8)
        return bool((extra > 0).nnz == 0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsityPattern):
            return NotImplemented
        return self.shape == other.shape and (self.mask != other.mask).nnz == 0

    def __hash__(self):
        return hash((self.shape, self.nnz))

    def mean_row_nnz(self) -> float:
        return self.nnz / self.shape[0]


def pattern_product(a: SparsityPattern, b: SparsityPattern) -> SparsityPattern:
    """Boolean matrix product: (i, j) present iff some t links a[i, t] and b[t, j]."""
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply patterns {a.shape} by {b.shape}")
    prod = a.mask.astype(np.int8) @ b.mask.astype(np.int8)
    return SparsityPattern.from_matrix(prod)


# ---------------------------------------------------------------------------
# Matrix Market I/O
#
# Coordinate format only, real entries, symmetric or general storage. Unit
# exponents ride in a "%unit_exponent: <int>" comment line because the format
# has no metadata slot; absent means 0.
# ---------------------------------------------------------------------------

_MM_HEADER = "%%MatrixMarket matrix coordinate real"


def _parse_matrix_market(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not lines or not lines[0].startswith("%%MatrixMarket"):
        raise FormatError(f"{path}: missing MatrixMarket header")
    header = lines[0].lower().split()
    if header[1:3] != ["matrix", "coordinate"] or header[3] not in ("real", "pattern"):
        raise FormatError(
            f"{path}: only 'matrix coordinate real|pattern' files are supported")
    is_pattern = header[3] == "pattern"
    symmetry = header[4] if len(header) > 4 else "general"
    if symmetry not in ("general", "symmetric"):
        raise FormatError(f"{path}: unsupported symmetry '{symmetry}'")

    unit_exponent = 0
    idx = 1
    while idx < len(lines) and (lines[idx].startswith("%") or not lines[idx].strip()):
        stripped = lines[idx].lstrip("%").strip()
        if stripped.lower().startswith("unit_exponent:"):
            try:
                unit_exponent = int(stripped.split(":", 1)[1])
            except ValueError as exc:
                raise FormatError(f"{path}: bad unit_exponent comment '{lines[idx]}'") from exc
        idx += 1
    if idx >= len(lines):
        raise FormatError(f"{path}: missing size line")
    try:
        nrows, ncols, nnz = (int(t) for t in lines[idx].split())
    except ValueError as exc:
        raise FormatError(f"{path}: bad size line '{lines[idx]}'") from exc
    idx += 1

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    width = 2 if is_pattern else 3
    count = 0
    for line in lines[idx:]:
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        parts = line.split()
        if len(parts) != width:
            raise FormatError(f"{path}: bad entry line '{line}'")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = 1.0 if is_pattern else float(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}: bad entry line '{line}'") from exc
        if count >= nnz:
            raise FormatError(f"{path}: more entries than declared ({nnz})")
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise FormatError(f"{path}: entry ({i},{j}) outside {nrows}x{ncols}")
        rows[count] = i - 1
        cols[count] = j - 1
        vals[count] = v
        count += 1
    if count != nnz:
        raise FormatError(f"{path}: declared {nnz} entries, found {count}")
    return (nrows, ncols), symmetry, unit_exponent, rows, cols, vals


def read_matrix_market(path, kind: str = "auto"):
    """Read a Matrix Market file as SparseSymMatrix or DiagonalMass.

    kind:
      "auto"     — DiagonalMass when all entries lie on the diagonal, else operator.
      "operator" — always SparseSymMatrix (symmetry enforced).
      "mass"     — always DiagonalMass (off-diagonal entries rejected).
    """
    if kind not in ("auto", "operator", "mass"):
        raise ValueError(f"unknown kind '{kind}'")
    shape, symmetry, unit_exponent, rows, cols, vals = _parse_matrix_market(path)
    if shape[0] != shape[1]:
        raise FormatError(f"{path}: square matrix expected, got {shape[0]}x{shape[1]}")
    n = shape[0]
    diagonal_only = bool(np.all(rows == cols))

    if kind == "mass" or (kind == "auto" and diagonal_only):
        if not diagonal_only:
            off = int(np.argmax(rows != cols))
            raise FormatError(
                f"{path}: mass matrix must be diagonal; found entry "
                f"({rows[off] + 1},{cols[off] + 1})"
            )
        diag = np.zeros(n)
        np.add.at(diag, rows, vals)
        if np.any(diag < 0):
            i = int(np.argmax(diag < 0))
            raise FormatError(f"{path}: negative mass entry at row {i + 1}")
        return DiagonalMass(diag=diag, unit_exponent=unit_exponent)

    if symmetry == "symmetric":
        if np.any(rows < cols):
            bad = int(np.argmax(rows < cols))
            raise FormatError(
                f"{path}: symmetric storage must keep the lower triangle; "
                f"found ({rows[bad] + 1},{cols[bad] + 1})"
            )
        return SparseSymMatrix.from_entries(n, rows, cols, vals, unit_exponent=unit_exponent)

    # General storage: both triangles must be present and agree exactly.
    mat = canonical_csr(sp.coo_array((vals, (rows, cols)), shape=shape))
    mismatch = (mat != mat.T).tocoo()
    if mismatch.nnz:
        i, j = int(mismatch.row[0]), int(mismatch.col[0])
        raise FormatError(
            f"{path}: general storage is not symmetric; entries "
            f"({i + 1},{j + 1}) and ({j + 1},{i + 1}) disagree"
        )
    return SparseSymMatrix(mat=mat, unit_exponent=unit_exponent)


def read_matrix_market_general(path):
    """Read a (possibly rectangular) general coordinate file as plain CSR."""
    shape, symmetry, _unit, rows, cols, vals = _parse_matrix_market(path)
    if symmetry != "general":
        raise FormatError(f"{path}: expected general storage")
    return canonical_csr(sp.coo_array((vals, (rows, cols)), shape=shape))


def read_matrix_market_pattern(path) -> SparsityPattern:
    """Read any coordinate file as a bare sparsity pattern (values ignored)."""
    shape, symmetry, _unit, rows, cols, _vals = _parse_matrix_market(path)
    if symmetry == "symmetric":
        off = rows != cols
        rows, cols = (np.concatenate([rows, cols[off]]),
                      np.concatenate([cols, rows[off]]))
    return SparsityPattern.from_positions(shape, rows, cols)


def write_matrix_market_pattern(pattern: SparsityPattern, path):
    """Write a sparsity pattern in Matrix Market 'pattern' storage."""
    rows, cols = pattern.positions()
    if pattern.is_symmetric():
        keep = rows >= cols
        rows, cols = rows[keep], cols[keep]
        symmetry = "symmetric"
    else:
        symmetry = "general"
    lines = [f"%%MatrixMarket matrix coordinate pattern {symmetry}",
             f"{pattern.shape[0]} {pattern.shape[1]} {len(rows)}"]
    lines.extend(f"{int(i) + 1} {int(j) + 1}" for i, j in zip(rows, cols))
    Path(path).write_text("\n".join(lines) + "\n")


def _format_value(v: float) -> str:
    return np.format_float_scientific(v, unique=True, trim="-")


def write_matrix_market(obj, path):
    """Write SparseSymMatrix (symmetric storage) or DiagonalMass to ``path``."""
    path = Path(path)
    if isinstance(obj, SparseSymMatrix):
        rows, cols, vals = obj.entries()
        # MM symmetric convention stores the lower triangle.
        rows, cols = cols, rows
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        n = obj.dim
        lines = [f"{_MM_HEADER} symmetric", f"%unit_exponent: {obj.unit_exponent}",
                 f"{n} {n} {len(vals)}"]
    elif isinstance(obj, DiagonalMass):
        n = obj.dim
        idx = np.flatnonzero(obj.diag)
        rows = cols = idx
        vals = obj.diag[idx]
        lines = [f"{_MM_HEADER} symmetric", f"%unit_exponent: {obj.unit_exponent}",
                 f"{n} {n} {len(vals)}"]
    else:
        raise TypeError(f"cannot write {type(obj).__name__} (use write_matrix_market_general)")
    lines.extend(f"{int(i) + 1} {int(j) + 1} {_format_value(v)}"
                 for i, j, v in zip(rows, cols, vals))
    path.write_text("\n".join(lines) + "\n")


def write_matrix_market_general(mat, path):
    """Write an arbitrary sparse matrix in general coordinate storage."""
    mat = canonical_csr(mat)
    coo = mat.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{_MM_HEADER} general", f"{mat.shape[0]} {mat.shape[1]} {mat.nnz}"]
    lines.extend(f"{int(i) + 1} {int(j) + 1} {_format_value(v)}"
                 for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]))
    Path(path).write_text("\n".join(lines) + "\n")
