import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse import csgraph

import shapes
from specoarse.combinatorial import (CoarseningAssignment, EdgeDistanceGraph,
                                     cluster_adjacency, edge_distances, kmedioids,
                                     multi_source_shortest_paths, read_roots_csv,
                                     sparsity_patterns)
from specoarse.errors import ClusteringError, UnitsError
from specoarse.operators import barycentric_mass, cotan_laplacian
from specoarse.sparse_core import (DiagonalMass, SparseSymMatrix, SparsityPattern,
                                   pattern_product)


def graph_from_edges(n, edges):
    u, v, w = (np.asarray(x) for x in zip(*edges))
    order = np.lexsort((v, u))
    return EdgeDistanceGraph(n=n, edge_u=u[order].astype(np.int64),
                             edge_v=v[order].astype(np.int64),
                             edge_w=w[order].astype(np.float64))


def random_graph(rng, n, extra_edges):
    """Connected random graph: a random spanning tree plus extra edges."""
    edges = {}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = float(rng.random() + 0.05)
    for _ in range(extra_edges):
        u, v = sorted(rng.integers(0, n, size=2).tolist())
        if u != v:
            edges.setdefault((u, v), float(rng.random() + 0.05))
    return graph_from_edges(n, [(u, v, w) for (u, v), w in edges.items()])


def scipy_weight_matrix(graph):
    rows = np.concatenate([graph.edge_u, graph.edge_v])
    cols = np.concatenate([graph.edge_v, graph.edge_u])
    data = np.concatenate([graph.edge_w, graph.edge_w])
    return sp.csr_array((data, (rows, cols)), shape=(graph.n, graph.n))


class TestEdgeDistances:
    def test_formula_value(self):
        L = SparseSymMatrix.from_entries(2, [0, 0, 1], [1, 0, 1], [-2.0, 2.0, 2.0])
        M = DiagonalMass(np.ones(2), unit_exponent=2)
        g = edge_distances(L, M)
        assert g.n_edges == 1
        assert g.edge_w[0] == pytest.approx(np.sqrt(2.0) / 2.0, rel=1e-12)

    def test_positive_coupling_clamped_to_zero(self):
        L = SparseSymMatrix.from_entries(2, [0, 0, 1], [1, 0, 1], [1.0, 1.0, 1.0])
        M = DiagonalMass(np.ones(2), unit_exponent=2)
        g = edge_distances(L, M)
        assert g.edge_w[0] == 0.0 and g.clamped_edges == 1

    def test_mass_scaling_homogeneity(self):
        mesh = shapes.triangle_strip(12)
        L, M = cotan_laplacian(mesh), barycentric_mass(mesh)
        g = edge_distances(L, M)
        half = edge_distances(L, DiagonalMass(M.diag / 2.0, unit_exponent=2))
        assert np.allclose(half.edge_w, g.edge_w / np.sqrt(2.0), rtol=1e-12)

    def test_zero_mass_exponent_needs_override(self):
        L, M = shapes.path_graph_operator(5)
        with pytest.raises(UnitsError, match="dist"):
            edge_distances(L, M)
        g = edge_distances(L, M, dist_exponent=1.0)
        assert np.allclose(g.edge_w, 2.0)  # (1 + 1)^1 / 1

    def test_permutation_equivariance(self):
        mesh = shapes.triangle_strip(10)
        L, M = cotan_laplacian(mesh), barycentric_mass(mesh)
        rng = np.random.default_rng(0)
        perm = rng.permutation(L.dim)
        P = sp.csr_array((np.ones(L.dim), (perm, np.arange(L.dim))),
                         shape=(L.dim, L.dim))
        Lp = SparseSymMatrix.from_csr(P @ L.mat @ P.T)
        Mp = DiagonalMass(M.diag[np.argsort(perm)], unit_exponent=2)
        a = edge_distances(L, M)
        b = edge_distances(Lp, Mp)

        def edge_set(g, relabel=None):
            out = {}
            for u, v, w in zip(g.edge_u, g.edge_v, g.edge_w):
                if relabel is not None:
                    u, v = relabel[u], relabel[v]
                out[(min(u, v), max(u, v))] = w
            return out

        mapped = edge_set(a, relabel=perm)
        assert set(mapped) == set(edge_set(b))
        for key, w in edge_set(b).items():
            assert mapped[key] == pytest.approx(w, rel=1e-12)


class TestShortestPaths:
    def test_all_sources_zero(self):
        g = random_graph(np.random.default_rng(1), 12, 10)
        dist, nearest = multi_source_shortest_paths(g, np.arange(12))
        assert np.all(dist == 0.0)
        assert np.array_equal(nearest, np.arange(12))

    def test_path_graph(self):
        g = graph_from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
        dist, nearest = multi_source_shortest_paths(g, [0])
        assert np.array_equal(dist, [0.0, 1.0, 2.0, 3.0])
        assert np.all(nearest == 0)

    def test_against_dijkstra_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            g = random_graph(rng, 30, 25)
            n_src = int(rng.integers(1, 6))
            sources = rng.choice(30, size=n_src, replace=False)
            dist, nearest = multi_source_shortest_paths(g, sources)
            oracle = csgraph.dijkstra(scipy_weight_matrix(g), indices=sources)
            assert np.allclose(dist, oracle.min(axis=0), atol=1e-12)
            for v in range(30):
                tied = np.flatnonzero(np.isclose(oracle[:, v], dist[v], atol=1e-12))
                assert nearest[v] in tied
                # ties break toward the lowest source node index
                assert sources[nearest[v]] == sources[tied].min()

    def test_unreachable_flagged(self):
        g = graph_from_edges(4, [(0, 1, 1.0)])  # nodes 2, 3 isolated
        dist, nearest = multi_source_shortest_paths(g, [0])
        assert np.isinf(dist[2]) and nearest[2] == -1

    def test_source_belongs_to_itself_despite_zero_edges(self):
        g = graph_from_edges(3, [(0, 1, 0.0), (1, 2, 0.0)])
        dist, nearest = multi_source_shortest_paths(g, [0, 1, 2])
        assert np.array_equal(nearest, [0, 1, 2])


class TestKmedioids:
    def test_every_node_its_own_cluster(self):
        g = random_graph(np.random.default_rng(3), 9, 6)
        assignment = kmedioids(g, 9, seed=0)
        assert np.array_equal(assignment.root_of, np.arange(9))
        assert np.array_equal(assignment.cluster_of, np.arange(9))

    def test_path_graph_three_clusters(self):
        g = graph_from_edges(9, [(i, i + 1, 1.0) for i in range(8)])
        # exhaustive 3-medoid enumeration oracle
        from itertools import combinations
        dists = csgraph.dijkstra(scipy_weight_matrix(g))
        best_cost = min(dists[list(roots)].min(axis=0).sum()
                        for roots in combinations(range(9), 3))
        costs = []
        for seed in range(6):
            assignment = kmedioids(g, 3, seed=seed)
            assignment.validate(g)
            costs.append(dists[assignment.root_of].min(axis=0).sum())
        assert min(costs) == pytest.approx(best_cost)  # some seed hits the optimum
        assert best_cost == 6.0  # clusters of three with middle roots

    def test_local_optimality_per_cluster(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 40, 40)
        assignment = kmedioids(g, 7, seed=11)
        w = scipy_weight_matrix(g)
        for c in range(assignment.m):
            nodes = np.flatnonzero(assignment.cluster_of == c)
            sub = csgraph.dijkstra(w[np.ix_(nodes, nodes)])
            totals = sub.sum(axis=1)
            root_local = int(np.flatnonzero(nodes == assignment.root_of[c])[0])
            assert totals[root_local] <= totals.min() + 1e-12

    def test_objective_non_increasing(self):
        for seed in range(5):
            g = random_graph(np.random.default_rng(seed), 60, 60)
            assignment = kmedioids(g, 8, seed=seed)
            trace = np.asarray(assignment.objective_trace)
            assert np.all(np.diff(trace) <= 1e-12)

    def test_deterministic(self):
        mesh = shapes.icosphere(2)
        L, M = cotan_laplacian(mesh), barycentric_mass(mesh)
        g = edge_distances(L, M)
        a = kmedioids(g, 30, seed=5)
        b = kmedioids(g, 30, seed=5)
        assert np.array_equal(a.cluster_of, b.cluster_of)
        assert np.array_equal(a.root_of, b.root_of)

    def test_roots_in_own_clusters_pattern_identity(self):
        g = random_graph(np.random.default_rng(6), 25, 20)
        assignment = kmedioids(g, 6, seed=2)
        prod = pattern_product(assignment.root_pattern(),
                               assignment.membership_pattern().transpose())
        assert prod == SparsityPattern.identity(6)

    def test_disconnected_components_each_get_roots(self):
        edges = [(i, i + 1, 1.0) for i in range(5)]          # component of 6
        edges += [(i, i + 1, 1.0) for i in range(7, 9)]      # component of 3
        g = graph_from_edges(10, edges)
        assignment = kmedioids(g, 4, seed=1)
        assignment.validate(g)
        comp_of_root = (assignment.root_of >= 7).sum()
        assert comp_of_root >= 1  # smaller component keeps at least one root

    def test_m_below_component_count_rejected(self):
        g = graph_from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)])
        with pytest.raises(ClusteringError):
            kmedioids(g, 1, seed=0)

    def test_m_above_n_rejected(self):
        g = graph_from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
        with pytest.raises(ClusteringError):
            kmedioids(g, 4, seed=0)

    def test_roots_csv_round_trip(self, tmp_path):
        g = random_graph(np.random.default_rng(7), 15, 10)
        assignment = kmedioids(g, 4, seed=3)
        assignment.write_roots_csv(tmp_path / "roots.csv")
        assert np.array_equal(read_roots_csv(tmp_path / "roots.csv"), assignment.root_of)


class TestPatterns:
    def laplacian_pattern(self, L):
        return L.pattern()

    def test_singleton_clusters_adjacency_is_operator_pattern(self):
        mesh = shapes.triangle_strip(8)
        L = cotan_laplacian(mesh)
        n = L.dim
        assignment = CoarseningAssignment(n=n, m=n, cluster_of=np.arange(n),
                                          root_of=np.arange(n))
        adj = cluster_adjacency(assignment.membership_pattern(), L.pattern())
        assert adj == L.pattern()

    def test_single_cluster(self):
        mesh = shapes.triangle_strip(6)
        L = cotan_laplacian(mesh)
        assignment = CoarseningAssignment(n=6, m=1, cluster_of=np.zeros(6, dtype=int),
                                          root_of=np.array([0]))
        adj = cluster_adjacency(assignment.membership_pattern(), L.pattern())
        assert adj.shape == (1, 1) and adj.nnz == 1

    def test_adjacency_against_pair_scan_oracle(self):
        rng = np.random.default_rng(8)
        mesh = shapes.icosphere(1)
        L = cotan_laplacian(mesh)
        n = L.dim
        m = 7
        cluster_of = rng.integers(0, m, size=n)
        for c in range(m):  # make every cluster non-empty
            cluster_of[c] = c
        assignment = CoarseningAssignment(n=n, m=m, cluster_of=cluster_of,
                                          root_of=np.arange(m))
        adj = cluster_adjacency(assignment.membership_pattern(), L.pattern())
        dense = L.pattern().mask.toarray()
        oracle = np.eye(m, dtype=bool)
        for i in range(n):
            for j in range(n):
                if dense[i, j]:
                    oracle[cluster_of[i], cluster_of[j]] = True
        assert np.array_equal(adj.mask.toarray(), oracle)

    def test_singleton_clusters_coarse_pattern_is_cube(self):
        mesh = shapes.triangle_strip(8)
        L = cotan_laplacian(mesh)
        n = L.dim
        assignment = CoarseningAssignment(n=n, m=n, cluster_of=np.arange(n),
                                          root_of=np.arange(n))
        membership = assignment.membership_pattern()
        adj = cluster_adjacency(membership, L.pattern())
        _, coarse = sparsity_patterns(membership, adj)
        s = L.pattern()
        assert coarse == pattern_product(s, pattern_product(s, s))

    def test_chain_three_ring_rows(self):
        # BFS-radius oracle on a chain of clusters: a middle row reaches
        # everything within three hops, so a 7-chain interior row has 7
        # entries while a 5-chain middle row saturates at 5.
        def chain_coarse_row(m_chain, row):
            i = np.arange(m_chain - 1)
            adj = SparsityPattern.from_positions(
                (m_chain, m_chain),
                np.concatenate([i, i + 1, np.arange(m_chain)]),
                np.concatenate([i + 1, i, np.arange(m_chain)]))
            cubed = pattern_product(adj, pattern_product(adj, adj))
            return cubed.mask[[row], :].nnz

        assert chain_coarse_row(7, 3) == 7
        assert chain_coarse_row(5, 2) == 5

    def test_interp_pattern_transport_identity(self):
        # membership^T applied to the adjacency equals the row-gathered adjacency
        g = random_graph(np.random.default_rng(9), 20, 15)
        mesh = shapes.triangle_strip(20)
        L = cotan_laplacian(mesh)
        assignment = kmedioids(edge_distances(L, barycentric_mass(mesh)), 5, seed=1)
        membership = assignment.membership_pattern()
        adj = cluster_adjacency(membership, L.pattern())
        interp, coarse = sparsity_patterns(membership, adj)
        oracle = adj.mask.toarray()[assignment.cluster_of, :]
        assert np.array_equal(interp.mask.toarray(), oracle)
        # coarse pattern equals interp^T . operator pattern . interp
        triple = pattern_product(
            interp.transpose(), pattern_product(L.pattern(), interp))
        assert coarse == triple
