"""Shared fixtures. The large pipeline runs are session-scoped so the
acceptance criteria and module tests reuse one run each."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import pytest

import shapes
from specoarse import (OptimizerConfig, barycentric_mass, anisotropic_laplacian,
                       cotan_laplacian, edge_distances, kmedioids, optimize,
                       smallest_k)
from specoarse.combinatorial import CoarseningAssignment, EdgeDistanceGraph
from specoarse.eigen import EigenBasis
from specoarse.optimize import CoarsenedOperator, precompute
from specoarse.sparse_core import DiagonalMass, SparseSymMatrix

SPHERE_SEED = 7


@dataclass(frozen=True)
class Fixture:
    name: str
    L: SparseSymMatrix
    M: DiagonalMass
    basis: EigenBasis
    graph: EdgeDistanceGraph
    assignment: CoarseningAssignment
    coarse: CoarsenedOperator
    seconds: float

    @property
    def roots(self):
        return self.assignment.root_of


def run_fixture(name, L, M, m, k, seed=SPHERE_SEED, max_iters=1000) -> Fixture:
    import time

    start = time.monotonic()
    basis = smallest_k(L, M, k, seed=seed)
    graph = edge_distances(L, M)
    assignment = kmedioids(graph, m, seed=seed)
    coarse = optimize(L, M, assignment, basis, OptimizerConfig(k=k, max_iters=max_iters))
    return Fixture(name=name, L=L, M=M, basis=basis, graph=graph,
                   assignment=assignment, coarse=coarse,
                   seconds=time.monotonic() - start)


@pytest.fixture(scope="session")
def strip20():
    mesh = shapes.triangle_strip(20)
    L = cotan_laplacian(mesh)
    M = barycentric_mass(mesh)
    basis = smallest_k(L, M, 4, seed=1)
    graph = edge_distances(L, M)
    assignment = kmedioids(graph, 6, seed=3)
    return mesh, L, M, basis, graph, assignment


@pytest.fixture(scope="session")
def strip20_precomp(strip20):
    _, L, M, basis, _, assignment = strip20
    return precompute(L, M, assignment, basis, 4)


@pytest.fixture(scope="session")
def sphere_mesh():
    return shapes.bumpy_sphere(4)


@pytest.fixture(scope="session")
def sphere_operator(sphere_mesh):
    return cotan_laplacian(sphere_mesh), barycentric_mass(sphere_mesh)


@pytest.fixture(scope="session")
def sphere_run(sphere_operator):
    L, M = sphere_operator
    return run_fixture("sphere", L, M, m=200, k=50)


@pytest.fixture(scope="session")
def sphere_galerkin(sphere_run):
    return optimize(sphere_run.L, sphere_run.M, sphere_run.assignment,
                    sphere_run.basis, OptimizerConfig(k=50, max_iters=0))


@pytest.fixture(scope="session")
def sphere_run_small_m(sphere_operator, sphere_run):
    L, M = sphere_operator
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # m <= 2k on purpose
        assignment = kmedioids(sphere_run.graph, 60, seed=SPHERE_SEED)
        coarse = optimize(L, M, assignment, sphere_run.basis, OptimizerConfig(k=50))
    return assignment, coarse


@pytest.fixture(scope="session")
def cube_run():
    mesh = shapes.bumpy_cube(23)
    L = cotan_laplacian(mesh)
    M = barycentric_mass(mesh)
    return run_fixture("bumpy_cube", L, M, m=250, k=50)


@pytest.fixture(scope="session", params=[1.0, 5.0], ids=["alpha1", "alpha5"])
def aniso_run(request, sphere_mesh):
    L = anisotropic_laplacian(sphere_mesh, request.param)
    M = barycentric_mass(sphere_mesh)
    return run_fixture(f"aniso_sphere_{request.param}", L, M, m=200, k=50)


@pytest.fixture(scope="session")
def sphere_run_k100(sphere_operator):
    L, M = sphere_operator
    return run_fixture("sphere_k100", L, M, m=420, k=100)
