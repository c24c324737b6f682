import numpy as np
import pytest

import shapes
from specoarse.errors import MeshError
from specoarse.mesh_io import TriangleMesh, load_obj, validate, write_obj


def test_single_triangle(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh = load_obj(path)
    assert mesh.n_vertices == 3 and mesh.n_faces == 1


def test_quad_fan_triangulated(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_obj(path)
    assert mesh.n_faces == 2
    assert np.array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])


def test_slash_tokens_keep_position_index(tmp_path):
    path = tmp_path / "tex.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n")
    mesh = load_obj(path)
    assert np.array_equal(mesh.faces, [[0, 1, 2]])


def test_icosphere_euler_characteristic(tmp_path):
    mesh = shapes.icosphere(2)
    path = tmp_path / "ico.obj"
    write_obj(mesh, path)
    back = load_obj(path)
    edges = back.edges().shape[0]
    assert back.n_vertices - edges + back.n_faces == 2


def test_write_load_round_trip(tmp_path):
    mesh = shapes.icosphere(1)
    path = tmp_path / "r.obj"
    write_obj(mesh, path)
    back = load_obj(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)


def test_missing_file():
    with pytest.raises(MeshError, match="nope.obj"):
        load_obj("nope.obj")


def test_out_of_range_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshError):
        load_obj(path)


def test_empty_mesh(tmp_path):
    path = tmp_path / "empty.obj"
    path.write_text("# nothing\n")
    with pytest.raises(MeshError):
        load_obj(path)


def test_repeated_vertex_in_face_rejected():
    with pytest.raises(MeshError, match="repeats"):
        TriangleMesh(vertices=np.eye(3), faces=np.array([[0, 1, 1]]))


class TestValidate:
    def test_clean_icosphere(self):
        assert validate(shapes.icosphere(1)).is_clean

    def test_collapsed_triangle_flagged(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.5, 0.0, 0.0]])
        faces = np.array([[0, 1, 2], [0, 1, 3]])  # second face has zero area
        report = validate(TriangleMesh(vertices=verts, faces=faces))
        assert report.zero_area_faces == (1,)

    def test_nonmanifold_edge_flagged(self):
        # three faces share edge (0, 1): edge-incidence count oracle says 3 > 2
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]])
        faces = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
        report = validate(TriangleMesh(vertices=verts, faces=faces))
        assert report.nonmanifold_edges == ((0, 1),)

    def test_unreferenced_vertex(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]])
        report = validate(TriangleMesh(vertices=verts, faces=np.array([[0, 1, 2]])))
        assert report.unreferenced_vertices == (3,)
