from __future__ import annotations

import math

import numpy as np
import pytest

from biphasic.exceptions import ParseError, ValidationError
from biphasic.mesh import Mesh, generate_unit_ball, generate_unit_square, load_mesh, save_mesh, validate


@pytest.mark.parametrize("n, cells, verts, facets", [(1, 2, 4, 4), (2, 8, 9, 8)])
def test_unit_square_counts(n, cells, verts, facets):
    m = generate_unit_square(n)
    assert (m.n_cells, m.n_vertices, len(m.boundary_facets)) == (cells, verts, facets)
    assert np.all(m.facet_tags == 1)


@pytest.mark.parametrize("n", [1, 3, 7])
def test_unit_square_volume_and_orientation(n):
    m = generate_unit_square(n)
    assert m.volume == pytest.approx(1.0, abs=1e-14)
    assert np.all(m.volumes > 0)
    assert m.boundary_measure == pytest.approx(4.0)


def test_disk_volume_converges():
    assert abs(generate_unit_ball(3, dim=2).volume - math.pi) < 0.02 * math.pi


def test_ball_volume_converges():
    m = generate_unit_ball(4, dim=3)
    assert abs(m.volume - 4 * math.pi / 3) < 0.02 * 4 * math.pi / 3
    assert np.all(m.volumes > 0)


def test_disk_coarse_fan():
    m = generate_unit_ball(0, dim=2)
    assert m.n_cells == 6 and m.n_vertices == 7
    assert np.allclose(np.linalg.norm(m.vertices[1:], axis=1), 1.0)


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_disk_euler_characteristic(n):
    assert generate_unit_ball(n, dim=2).euler_characteristic() == 1


@pytest.mark.parametrize("mesh", [generate_unit_square(3), generate_unit_ball(2, 2), generate_unit_ball(2, 3)])
def test_interior_facets_shared_by_two_cells(mesh):
    assert validate(mesh) == []
    d = mesh.dim
    faces = np.sort(np.vstack([np.delete(mesh.cells, k, axis=1) for k in range(d + 1)]), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert (counts == 1).sum() == len(mesh.boundary_facets)


def test_outward_normals():
    m = generate_unit_ball(2, dim=3)
    meas, n = m.facet_measures_and_normals()
    centroids = m.vertices[m.boundary_facets].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", n, centroids) > 0)


def test_round_trip(tmp_path):
    m = generate_unit_square(2)
    save_mesh(m, tmp_path / "sq.msh")
    m2 = load_mesh(tmp_path / "sq.msh")
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.cells, m2.cells)
    assert np.array_equal(m.boundary_facets, m2.boundary_facets)


def test_repeated_vertex_cell_names_cell(tmp_path):
    text = "2 4 2 4\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 2\n0 1 1\n1 2 1\n2 3 1\n3 0 1\n"
    (tmp_path / "bad.msh").write_text(text)
    with pytest.raises(ValidationError) as exc:
        load_mesh(tmp_path / "bad.msh")
    assert 1 in exc.value.indices


def test_nonexistent_vertex_is_parse_error(tmp_path):
    text = "2 3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1 1\n1 7 1\n2 0 1\n"
    (tmp_path / "bad.msh").write_text(text)
    with pytest.raises(ParseError) as exc:
        load_mesh(tmp_path / "bad.msh")
    assert exc.value.line == 7


def test_malformed_line(tmp_path):
    (tmp_path / "bad.msh").write_text("2 3 1 3\n0 0\n1 x\n0 1\n0 1 2\n0 1 1\n1 2 1\n2 0 1\n")
    with pytest.raises(ParseError) as exc:
        load_mesh(tmp_path / "bad.msh")
    assert exc.value.line == 3


def test_orphan_facet_reported():
    m = generate_unit_square(2)
    fac = np.vstack([m.boundary_facets, [[0, 4]]])
    bad = Mesh(m.vertices, m.cells, fac)
    assert any("orphan" in p for p in validate(bad, raise_on_error=False))


def test_locate_and_barycentric():
    m = generate_unit_square(4)
    pts = np.array([[0.1, 0.2], [0.9, 0.55], [2.0, 2.0]])
    cells = m.locate(pts)
    assert cells[-1] == -1
    for c, x in zip(cells[:2], pts[:2]):
        lam = m.barycentric(c, x)
        assert np.all(lam >= -1e-12)
        assert np.allclose(lam @ m.vertices[m.cells[c]], x)
