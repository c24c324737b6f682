"""Discrete operators assembled from triangle meshes.

All operators built here are symmetric with exact zero row sums (the
diagonal is assembled as the negated off-diagonal row sum) and are
positive semi-definite by construction. Unit exponents: stiffness-type
operators carry power of length 0, the barycentric mass carries 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateFaceError, MeshError
from .mesh_io import TriangleMesh
from .sparse_core import DiagonalMass, SparseSymMatrix, canonical_csr

_DEGENERATE_REL_AREA = 1e-14


def _face_geometry(mesh: TriangleMesh):
    """Per-face corner points, double areas, and unit normals.

    Raises DegenerateFaceError on the first face whose area is below
    1e-14 times the squared bounding-box diagonal.
    """
    p = [mesh.vertices[mesh.faces[:, c]] for c in range(3)]
    normal = np.cross(p[1] - p[0], p[2] - p[0])
    double_area = np.linalg.norm(normal, axis=1)
    floor = 2.0 * _DEGENERATE_REL_AREA * mesh.bbox_diagonal() ** 2
    bad = double_area <= floor
    if bad.any():
        raise DegenerateFaceError(int(np.argmax(bad)))
    unit_normal = normal / double_area[:, None]
    return p, double_area, unit_normal


def _corner_cotangents(p, double_area):
    """Cotangent of the interior angle at each of the three face corners."""
    cots = np.empty((double_area.shape[0], 3))
    for c in range(3):
        u = p[(c + 1) % 3] - p[c]
        v = p[(c + 2) % 3] - p[c]
        cots[:, c] = np.einsum("ij,ij->i", u, v) / double_area
    return cots


def _assemble_from_edge_weights(n, rows, cols, weights) -> SparseSymMatrix:
    """Build a row-sum-zero symmetric operator from off-diagonal couplings.

    ``weights`` holds the (accumulated) coupling w_ij; the assembled
    matrix has off-diagonal entries -w_ij and diagonal sum_j w_ij, so
    row sums vanish exactly up to the order of summation.
    """
    off = sp.coo_array((-weights, (rows, cols)), shape=(n, n))
    off = canonical_csr(off + off.T)
    diag = -np.asarray(off.sum(axis=1)).ravel()
    mat = canonical_csr(off + sp.diags_array(diag))
    return SparseSymMatrix(mat=mat, unit_exponent=0)


def cotan_laplacian(mesh: TriangleMesh) -> SparseSymMatrix:
    """Cotangent Laplacian: off-diagonals -(cot a + cot b)/2, PSD sign convention.

    Negative weights from obtuse triangles are kept as-is; the coarsening
    distance clamps them downstream instead.
    """
    p, double_area, _ = _face_geometry(mesh)
    cots = _corner_cotangents(p, double_area)
    # Corner c faces the edge between the other two vertices.
    rows = mesh.faces[:, [1, 2, 0]].ravel()
    cols = mesh.faces[:, [2, 0, 1]].ravel()
    weights = 0.5 * cots.ravel()
    return _assemble_from_edge_weights(mesh.n_vertices, rows, cols, weights)


def barycentric_mass(mesh: TriangleMesh) -> DiagonalMass:
    """Lumped mass: one third of incident triangle areas per vertex (units: length^2)."""
    _, double_area, _ = _face_geometry(mesh)
    areas = 0.5 * double_area
    diag = np.zeros(mesh.n_vertices)
    np.add.at(diag, mesh.faces.ravel(), np.repeat(areas / 3.0, 3))
    if np.any(diag <= 0):
        raise MeshError(f"vertex {int(np.argmax(diag <= 0))} has zero mass "
                        "(isolated or only degenerate faces)")
    return DiagonalMass(diag=diag, unit_exponent=2)


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized where possible."""
    p, double_area, unit_normal = _face_geometry(mesh)
    acc = np.zeros((mesh.n_vertices, 3))
    weighted = unit_normal * (0.5 * double_area)[:, None]
    for c in range(3):
        np.add.at(acc, mesh.faces[:, c], weighted)
    norms = np.linalg.norm(acc, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return acc / safe[:, None]


def _hat_gradients(p, double_area, unit_normal):
    """Gradients of the three linear hat functions on each face, shape (f, 3, 3)."""
    grads = np.empty((double_area.shape[0], 3, 3))
    for c in range(3):
        opposite = p[(c + 2) % 3] - p[(c + 1) % 3]
        grads[:, c, :] = np.cross(unit_normal, opposite) / double_area[:, None]
    return grads


def anisotropic_laplacian(mesh: TriangleMesh, alpha: float) -> SparseSymMatrix:
    """Curvature-aligned anisotropic stiffness operator.

    Per face, diffusion is scaled by (1 + alpha) along an estimated
    principal-curvature direction and by 1 across it. The direction is
    the in-plane projection of the largest difference of the face's
    vertex normals; flat faces (parallel normals) fall back to the
    longest-edge direction. alpha = 0 reduces exactly to the cotangent
    Laplacian.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    p, double_area, unit_normal = _face_geometry(mesh)
    vnormals = vertex_normals(mesh)
    f = double_area.shape[0]

    # Candidate directions: normal differences across the three edges,
    # projected into the face plane; keep the longest.
    best = np.zeros((f, 3))
    best_norm = np.zeros(f)
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        dn = vnormals[mesh.faces[:, b]] - vnormals[mesh.faces[:, a]]
        dn = dn - np.einsum("ij,ij->i", dn, unit_normal)[:, None] * unit_normal
        norm = np.linalg.norm(dn, axis=1)
        take = norm > best_norm
        best[take] = dn[take]
        best_norm[take] = norm[take]

    flat = best_norm < 1e-7
    if flat.any():
        edge_len = np.stack([np.linalg.norm(p[(c + 2) % 3] - p[(c + 1) % 3], axis=1)
                             for c in range(3)], axis=1)
        longest = np.argmax(edge_len, axis=1)
        for c in range(3):
            idx = flat & (longest == c)
            if idx.any():
                best[idx] = (p[(c + 2) % 3] - p[(c + 1) % 3])[idx]
        best_norm = np.linalg.norm(best, axis=1)

    along = best / best_norm[:, None]
    across = np.cross(unit_normal, along)

    # Diffusion tensor restricted to the face plane. The plain projector
    # (alpha = 0) recovers the isotropic FEM stiffness = cotangent weights.
    tensor = ((1.0 + alpha) * np.einsum("fi,fj->fij", along, along)
              + np.einsum("fi,fj->fij", across, across))

    grads = _hat_gradients(p, double_area, unit_normal)
    areas = 0.5 * double_area
    local = np.einsum("f,fai,fij,fbj->fab", areas, grads, tensor, grads)
    local = 0.5 * (local + np.transpose(local, (0, 2, 1)))

    # One unordered pair per face edge; coupling w_ij = -K_ij of the local stiffness.
    rows = mesh.faces[:, [0, 1, 2]].ravel()
    cols = mesh.faces[:, [1, 2, 0]].ravel()
    weights = -np.stack([local[:, 0, 1], local[:, 1, 2], local[:, 2, 0]], axis=1).ravel()
    return _assemble_from_edge_weights(mesh.n_vertices, rows, cols, weights)


@dataclass(frozen=True)
class OperatorPair:
    """A stiffness-type operator with its diagonal mass, validated together."""

    L: SparseSymMatrix
    M: DiagonalMass

    def __post_init__(self):
        if self.L.dim != self.M.dim:
            raise MeshError(f"operator dim {self.L.dim} vs mass dim {self.M.dim}")
        self.M.require_strictly_positive()

    @property
    def dim(self) -> int:
        return self.L.dim

    def check_row_sums(self, rtol: float = 1e-10) -> float:
        """Max absolute row sum relative to max |L|; raises when Laplacian-type 1 test fails."""
        resid = np.abs(self.L.mat @ np.ones(self.dim)).max()
        bound = rtol * max(self.L.max_abs(), 1e-300)
        if resid > bound:
            raise MeshError(f"row sums {resid:g} exceed {bound:g}")
        return float(resid)

    def check_psd(self, rtol: float = 1e-10, dense_max_dim: int = 300) -> float:
        """Smallest eigenvalue check via dense solve; only for desk-scale operators."""
        if self.dim > dense_max_dim:
            raise ValueError(f"dense PSD check limited to dim <= {dense_max_dim}")
        w = np.linalg.eigvalsh(self.L.to_dense())
        if w[0] < -rtol * max(abs(w[-1]), 1e-300):
            raise MeshError(f"operator is not PSD: min eigenvalue {w[0]:g}")
        return float(w[0])
