"""Combinatorial coarsening: root-node selection and clustering on the operator graph.

The operator's off-diagonal entries define a weighted graph whose edge
lengths blend coupling strength and nodal mass; k-medoids clustering
under shortest-path distances picks m root nodes and clusters, from
which the cluster-membership and root-selection operators and the
coarse sparsity patterns are derived.

Determinism: nearest-root ties and medoid ties break toward the lowest
node index, and all randomness comes from the caller's seed, so a rerun
with identical inputs is bit-identical.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import ClusteringError, DimensionMismatch, UnitsError
from .sparse_core import (DiagonalMass, SparseSymMatrix, SparsityPattern,
                          pattern_product)


@dataclass
class EdgeDistanceGraph:
    """Symmetric non-negative edge lengths over the operator's off-diagonal pattern."""

    n: int
    edge_u: np.ndarray      # (e,) with edge_u < edge_v
    edge_v: np.ndarray
    edge_w: np.ndarray      # lengths >= 0
    clamped_edges: int = 0  # edges clamped to zero length (repulsive couplings)
    _adj: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_edges(self) -> int:
        return self.edge_u.shape[0]

    def adjacency(self):
        """Directed CSR-style adjacency (indptr, neighbors, weights), cached."""
        if self._adj is None:
            heads = np.concatenate([self.edge_u, self.edge_v])
            tails = np.concatenate([self.edge_v, self.edge_u])
            wgt = np.concatenate([self.edge_w, self.edge_w])
            order = np.argsort(heads, kind="stable")
            deg = np.bincount(heads, minlength=self.n)
            indptr = np.concatenate([[0], np.cumsum(deg)])
            self._adj = (indptr.astype(np.int64), tails[order], wgt[order])
        return self._adj

    def pattern_csr(self) -> sp.csr_array:
        """Unweighted connectivity (keeps zero-length edges), for component analysis."""
        ones = np.ones(2 * self.n_edges, dtype=np.int8)
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        return sp.csr_array(sp.coo_array((ones, (rows, cols)), shape=(self.n, self.n)))

    def components(self):
        return csgraph.connected_components(self.pattern_csr(), directed=False)


def edge_distances(L: SparseSymMatrix, M: DiagonalMass,
                   dist_exponent: float | None = None) -> EdgeDistanceGraph:
    """Edge lengths (M_ii + M_jj)^e / (-L_ij), clamped at zero, e = (p+1)/q.

    The exponent makes the length carry units of length given the unit
    exponents p of L and q of M; ``dist_exponent`` overrides it for
    operators with unknown units (mandatory when q = 0).
    """
    if L.dim != M.dim:
        raise DimensionMismatch(f"operator dim {L.dim} vs mass dim {M.dim}")
    M.require_strictly_positive()
    if dist_exponent is None:
        if M.unit_exponent == 0:
            raise UnitsError(
                "edge-distance exponent (p+1)/q is undefined for mass unit "
                "exponent q = 0; pass an explicit dist_exponent (--dist-exponent)")
        exponent = (L.unit_exponent + 1) / M.unit_exponent
    else:
        exponent = float(dist_exponent)

    coo = L.mat.tocoo()
    off = coo.row < coo.col
    u, v, lij = coo.row[off], coo.col[off], coo.data[off]
    order = np.lexsort((v, u))
    u, v, lij = u[order], v[order], lij[order]

    scale = (M.diag[u] + M.diag[v]) ** exponent
    attractive = lij < 0
    w = np.where(attractive, scale / np.where(attractive, -lij, 1.0), 0.0)
    return EdgeDistanceGraph(n=L.dim, edge_u=u.astype(np.int64),
                             edge_v=v.astype(np.int64), edge_w=w,
                             clamped_edges=int(np.count_nonzero(~attractive)))


def multi_source_shortest_paths(graph: EdgeDistanceGraph, sources):
    """Distance and nearest-source index for every node.

    Sources are settled first (each source belongs to itself even under
    zero-length ties); remaining ties break toward the lowest source
    node index. Unreachable nodes get distance inf and index -1.
    ``nearest[v]`` indexes into ``sources``.
    """
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size == 0:
        raise ClusteringError("at least one source required")
    if np.unique(sources).size != sources.size:
        raise ClusteringError("sources must be distinct")
    if sources.min() < 0 or sources.max() >= graph.n:
        raise DimensionMismatch("source index out of range")

    indptr, nbr, wgt = graph.adjacency()
    dist = np.full(graph.n, np.inf)
    nearest = np.full(graph.n, -1, dtype=np.int64)
    settled = np.zeros(graph.n, dtype=bool)

    dist[sources] = 0.0
    nearest[sources] = np.arange(sources.size)
    settled[sources] = True

    heap = []
    for idx, s in enumerate(sources):
        for e in range(indptr[s], indptr[s + 1]):
            t = int(nbr[e])
            if not settled[t]:
                heap.append((float(wgt[e]), int(s), t, idx))
    heapq.heapify(heap)

    while heap:
        d, src_node, v, src_idx = heapq.heappop(heap)
        if settled[v]:
            continue
        settled[v] = True
        dist[v] = d
        nearest[v] = src_idx
        for e in range(indptr[v], indptr[v + 1]):
            t = int(nbr[e])
            if not settled[t]:
                heapq.heappush(heap, (d + float(wgt[e]), src_node, t, src_idx))
    return dist, nearest


@dataclass(frozen=True)
class CoarseningAssignment:
    """Cluster membership and root selection for n nodes into m clusters.

    cluster_of is total (every node assigned); roots are distinct and
    each root lies in its own cluster, so selecting roots after summing
    memberships is the identity on the coarse side.
    """

    n: int
    m: int
    cluster_of: np.ndarray  # (n,) cluster ids in [0, m)
    root_of: np.ndarray     # (m,) distinct node indices
    objective_trace: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cluster_of", np.asarray(self.cluster_of, dtype=np.int64))
        object.__setattr__(self, "root_of", np.asarray(self.root_of, dtype=np.int64))

    def membership_pattern(self) -> SparsityPattern:
        """m-by-n cluster membership: exactly one entry per column."""
        return SparsityPattern.from_positions(
            (self.m, self.n), self.cluster_of, np.arange(self.n))

    def root_pattern(self) -> SparsityPattern:
        """m-by-n root selection: one entry per row, at most one per column."""
        return SparsityPattern.from_positions(
            (self.m, self.n), np.arange(self.m), self.root_of)

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.m)

    def validate(self, graph: EdgeDistanceGraph | None = None):
        if self.cluster_of.shape != (self.n,) or self.root_of.shape != (self.m,):
            raise ClusteringError("assignment arrays have wrong shapes")
        if self.cluster_of.min() < 0 or self.cluster_of.max() >= self.m:
            raise ClusteringError("cluster id out of range")
        if np.unique(self.root_of).size != self.m:
            raise ClusteringError("roots are not distinct")
        if not np.array_equal(self.cluster_of[self.root_of], np.arange(self.m)):
            raise ClusteringError("a root is not a member of its own cluster")
        if np.any(self.cluster_sizes() == 0):
            raise ClusteringError("empty cluster")
        if graph is not None:
            pattern = graph.pattern_csr()
            for c in range(self.m):
                nodes = np.flatnonzero(self.cluster_of == c)
                if nodes.size == 1:
                    continue
                sub = pattern[np.ix_(nodes, nodes)]
                n_comp, _ = csgraph.connected_components(sub, directed=False)
                if n_comp != 1:
                    raise ClusteringError(f"cluster {c} is disconnected")
        return self

    def write_assignment_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["node", "cluster"])
            for node, cluster in enumerate(self.cluster_of):
                writer.writerow([node, int(cluster)])

    def write_roots_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["root"])
            for r in self.root_of:
                writer.writerow([int(r)])


def read_roots_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if rows and rows[0] and not rows[0][0].lstrip("-").isdigit():
        rows = rows[1:]
    return np.asarray([int(r[0]) for r in rows], dtype=np.int64)


def _allocate_roots(component_sizes: np.ndarray, m: int) -> np.ndarray:
    """Largest-remainder split of m roots across components, at least 1 each."""
    sizes = np.asarray(component_sizes, dtype=np.int64)
    n = int(sizes.sum())
    ideal = m * sizes / n
    quota = np.maximum(np.floor(ideal).astype(np.int64), 1)
    quota = np.minimum(quota, sizes)
    while quota.sum() > m:
        excess = np.where(quota > 1, quota - ideal, -np.inf)
        quota[int(np.argmax(excess))] -= 1
    while quota.sum() < m:
        room = np.where(quota < sizes, ideal - quota, -np.inf)
        quota[int(np.argmax(room))] += 1
    return quota


def _medoid_update(graph: EdgeDistanceGraph, roots: np.ndarray,
                   labels: np.ndarray) -> np.ndarray:
    """Per cluster, move the root to the node minimizing total in-cluster distance.

    Distances are taken within the cluster's induced subgraph
    (Floyd-Warshall on the small local matrix). Nodes unreachable from
    the current root inside the cluster are left out of the update and
    get reassigned by the next nearest-root pass.
    """
    indptr, nbr, wgt = graph.adjacency()
    pos = np.full(graph.n, -1, dtype=np.int64)
    new_roots = roots.copy()
    for c in range(roots.size):
        nodes = np.flatnonzero(labels == c)
        size = nodes.size
        if size == 1:
            new_roots[c] = nodes[0]
            continue
        pos[nodes] = np.arange(size)
        local = np.full((size, size), np.inf)
        np.fill_diagonal(local, 0.0)
        for i, u in enumerate(nodes):
            for e in range(indptr[u], indptr[u + 1]):
                j = pos[nbr[e]]
                if j >= 0 and wgt[e] < local[i, j]:
                    local[i, j] = float(wgt[e])
        for t in range(size):
            np.minimum(local, local[:, t, None] + local[None, t, :], out=local)
        root_local = int(pos[roots[c]])
        reachable = np.isfinite(local[root_local])
        totals = np.where(reachable, local[:, reachable].sum(axis=1), np.inf)
        new_roots[c] = nodes[int(np.argmin(totals))]
        pos[nodes] = -1
    return new_roots


def kmedioids(graph: EdgeDistanceGraph, m: int, seed: int = 0,
              max_iters: int = 100) -> CoarseningAssignment:
    """Lloyd-style k-medoids under shortest-path distances.

    Roots are initialized as a seeded uniform sample, allocated across
    connected components proportionally to node count (minimum one
    each); iteration alternates nearest-root assignment and in-cluster
    medoid recomputation until the root set is stable. Final cluster
    ids are relabeled by ascending root node index.
    """
    n = graph.n
    if not (1 <= m <= n):
        raise ClusteringError(f"need 1 <= m <= n, got m={m}, n={n}")
    n_comp, comp_label = graph.components()
    if m < n_comp:
        raise ClusteringError(
            f"m={m} below the {n_comp} connected components; some component "
            "would have no root")

    comp_sizes = np.bincount(comp_label, minlength=n_comp)
    quotas = _allocate_roots(comp_sizes, m)
    rng = np.random.default_rng(seed)
    picks = []
    for c in range(n_comp):
        members = np.flatnonzero(comp_label == c)
        picks.append(rng.choice(members, size=int(quotas[c]), replace=False))
    roots = np.sort(np.concatenate(picks))

    trace: list[float] = []
    labels = None
    for _ in range(max_iters):
        dist, labels = multi_source_shortest_paths(graph, roots)
        trace.append(float(dist.sum()))
        new_roots = _medoid_update(graph, roots, labels)
        if np.array_equal(new_roots, roots):
            break
        roots = new_roots
    else:
        dist, labels = multi_source_shortest_paths(graph, roots)
        trace.append(float(dist.sum()))

    # Relabel clusters by ascending root node index for cross-run stability.
    order = np.argsort(roots, kind="stable")
    inverse = np.empty(m, dtype=np.int64)
    inverse[order] = np.arange(m)
    assignment = CoarseningAssignment(
        n=n, m=m, cluster_of=inverse[labels], root_of=roots[order],
        objective_trace=tuple(trace))
    return assignment.validate(graph)


def cluster_adjacency(membership: SparsityPattern, operator_pattern: SparsityPattern
                      ) -> SparsityPattern:
    """Coarse adjacency: clusters i, j adjacent iff some members are coupled.

    Boolean product of membership, operator pattern, and membership
    transposed; the diagonal is forced full so every cluster is
    self-adjacent even without stored diagonal entries.
    """
    if membership.shape[1] != operator_pattern.shape[0]:
        raise DimensionMismatch(
            f"membership {membership.shape} vs operator {operator_pattern.shape}")
    prod = pattern_product(pattern_product(membership, operator_pattern),
                           membership.transpose())
    return prod.with_diagonal()


def sparsity_patterns(membership: SparsityPattern, adjacency: SparsityPattern):
    """Interpolation pattern (membership^T x adjacency) and coarse pattern (adjacency^3)."""
    if membership.shape[0] != adjacency.shape[0]:
        raise DimensionMismatch(
            f"membership {membership.shape} vs adjacency {adjacency.shape}")
    interp = pattern_product(membership.transpose(), adjacency)
    coarse = pattern_product(adjacency, pattern_product(adjacency, adjacency))
    return interp, coarse
