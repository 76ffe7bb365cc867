import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from specpool.errors import (
    DegenerateExtent,
    EmptyMesh,
    MeshIndexError,
    ParseError,
    ZeroAreaFace,
)
from specpool.mesh import (
    Mesh,
    cotangent_stiffness,
    face_areas,
    load_mesh,
    normalize_unit_box,
    quality_report,
    quality_report_json,
    vertex_areas,
    write_off,
)
from specpool.synthetic import icosphere

from conftest import tetrahedron


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- I/O


def test_off_tetrahedron_round_trips_exactly(tmp_path, tetra):
    p = tmp_path / "t.off"
    write_off(tetra, p)
    m = load_mesh(p)
    assert m.n_vertices == 4 and m.n_faces == 4
    assert np.array_equal(m.vertices, tetra.vertices)
    assert np.array_equal(m.faces, tetra.faces)


def test_off_handwritten(tmp_path):
    p = _write(tmp_path, "h.off", "OFF\n# comment\n4 4 6\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n"
               "3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n")
    m = load_mesh(p)
    assert m.vertices[1].tolist() == [1.0, 0.0, 0.0]
    assert m.n_faces == 4


def test_obj_quad_is_fan_split(tmp_path):
    p = _write(tmp_path, "q.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4/4/1\n")
    m = load_mesh(p)
    assert m.n_faces == 2
    assert m.faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_negative_indices(tmp_path):
    p = _write(tmp_path, "n.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    assert load_mesh(p).faces.tolist() == [[0, 1, 2]]


def test_off_out_of_range_index(tmp_path):
    p = _write(tmp_path, "bad.off", "OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 99\n")
    with pytest.raises(MeshIndexError):
        load_mesh(p)
    with pytest.raises(IndexError):
        load_mesh(p)


def test_parse_error_reports_line(tmp_path):
    p = _write(tmp_path, "bad.off", "OFF\n4 1 0\n0 0 0\n1 zero 0\n0 1 0\n0 0 1\n3 0 1 2\n")
    with pytest.raises(ParseError) as exc:
        load_mesh(p)
    assert exc.value.line == 4


def test_empty_mesh(tmp_path):
    with pytest.raises(EmptyMesh):
        load_mesh(_write(tmp_path, "e.obj", "# nothing\n"))
    with pytest.raises(EmptyMesh):
        load_mesh(_write(tmp_path, "e2.off", "OFF\n0 0 0\n"))


def test_ply_ascii(tmp_path):
    text = ("ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
            "property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n"
            "0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n")
    m = load_mesh(_write(tmp_path, "q.ply", text))
    assert m.n_vertices == 4 and m.n_faces == 2


def test_ply_binary_rejected(tmp_path):
    p = tmp_path / "b.ply"
    p.write_bytes(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ParseError, match="binary"):
        load_mesh(p)


def test_mesh_rejects_degenerate_face():
    with pytest.raises(Exception):
        Mesh(np.eye(3), [[0, 0, 1]])


# ---------------------------------------------------------------- normalization


def test_normalize_cube():
    m = Mesh([[0, 0, 0], [2, 0, 0], [0, 2, 0], [2, 2, 2]], [[0, 1, 2], [1, 2, 3]])
    n = normalize_unit_box(m)
    assert n.vertices.min(axis=0).tolist() == [-1, -1, -1]
    assert n.vertices.max(axis=0).tolist() == [1, 1, 1]


def test_normalize_box_keeps_aspect():
    m = Mesh([[0, 0, 0], [4, 0, 0], [0, 2, 0], [4, 2, 2]], [[0, 1, 2], [1, 2, 3]])
    n = normalize_unit_box(m)
    np.testing.assert_array_equal(n.vertices.min(axis=0), [-1, -0.5, -0.5])
    np.testing.assert_array_equal(n.vertices.max(axis=0), [1, 0.5, 0.5])


def test_normalize_degenerate():
    m = Mesh([[1, 1, 1]] * 3, [[0, 1, 2]])
    with pytest.raises(DegenerateExtent):
        normalize_unit_box(m)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.floats(-1e3, 1e3)))
def test_normalize_idempotent(v):
    if np.ptp(v, axis=0).max() < 1e-3:
        return
    m = Mesh(v, [[0, 1, 2], [3, 4, 5]])
    once = normalize_unit_box(m)
    twice = normalize_unit_box(once)
    np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12, rtol=0)


# ---------------------------------------------------------------- mass


def test_right_triangle_areas():
    m = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    np.testing.assert_allclose(vertex_areas(m), [1 / 6] * 3, rtol=1e-15)


def test_tetrahedron_areas_brute_force(tetra):
    # oracle: loop over faces incident to each vertex, Heron's formula
    def heron(a, b, c):
        x, y, z = (np.linalg.norm(a - b), np.linalg.norm(b - c), np.linalg.norm(c - a))
        s = (x + y + z) / 2
        return np.sqrt(s * (s - x) * (s - y) * (s - z))

    ref = np.zeros(4)
    for v in range(4):
        for f in tetra.faces:
            if v in f:
                ref[v] += heron(*tetra.vertices[f]) / 3
    np.testing.assert_allclose(vertex_areas(tetra), ref, rtol=1e-12)
    np.testing.assert_allclose(ref, np.sqrt(3) / 4, rtol=1e-12)


def test_icosphere_mass_sums_to_surface_area():
    m = icosphere(3)
    total = sum(0.5 * np.linalg.norm(np.cross(b - a, c - a)) for a, b, c in m.vertices[m.faces])
    assert vertex_areas(m).sum() == pytest.approx(total, rel=1e-9)
    assert (vertex_areas(m) > 0).all()


def test_zero_area_face():
    m = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    with pytest.raises(ZeroAreaFace):
        vertex_areas(m)


# ---------------------------------------------------------------- stiffness


def test_unit_square_diagonal_weight_zero():
    m = Mesh([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], [[0, 1, 2], [0, 2, 3]])
    W = cotangent_stiffness(m).toarray()
    # oracle: angles opposite the diagonal (0, 2) sit at vertices 1 and 3, both 90 degrees
    def cot_at(p, a, b):
        u, v = a - p, b - p
        return np.dot(u, v) / np.linalg.norm(np.cross(u, v))
    V = m.vertices
    expected = -(cot_at(V[1], V[0], V[2]) + cot_at(V[3], V[0], V[2])) / 2
    assert abs(expected) < 1e-15
    assert W[0, 2] == pytest.approx(expected, abs=1e-15)
    # boundary edge (0, 1): single 45 degree angle at vertex 2
    assert W[0, 1] == pytest.approx(-0.5, rel=1e-12)


def test_equilateral_triangle_weights():
    m = Mesh([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]], [[0, 1, 2]])
    W = cotangent_stiffness(m).toarray()
    off = W[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, -1 / (2 * np.sqrt(3)), rtol=1e-12)


@pytest.mark.parametrize("mesh", [icosphere(2), tetrahedron()], ids=["icosphere", "tetra"])
def test_stiffness_symmetric_psd_rows_zero(mesh):
    W = cotangent_stiffness(mesh)
    d = W.toarray()
    assert np.abs(d - d.T).max() <= 1e-12
    assert np.abs(W @ np.ones(mesh.n_vertices)).max() <= 1e-9 * np.abs(d).max()
    assert np.linalg.eigvalsh(d).min() >= -1e-9


def test_permutation_equivariance(blob2):
    perm = np.random.default_rng(0).permutation(blob2.n_vertices)
    p = blob2.permuted(perm)
    W, Wp = cotangent_stiffness(blob2).toarray(), cotangent_stiffness(p).toarray()
    np.testing.assert_allclose(Wp, W[np.ix_(perm, perm)], atol=1e-12)
    np.testing.assert_allclose(vertex_areas(p), vertex_areas(blob2)[perm], rtol=1e-12)


def test_sliver_cotangents_clamped(caplog):
    m = Mesh([[0, 0, 0], [1, 0, 0], [0.5, 1e-9, 0], [0.5, -1, 0]], [[0, 1, 2], [0, 3, 1]])
    W = cotangent_stiffness(m)
    assert np.isfinite(W.data).all()
    assert np.abs(W.data).max() <= 1e4 + 1
    rep = quality_report(m)
    assert rep["clamped_cotangents"] >= 1
    assert "clamped" in caplog.text


def test_quality_report_counts():
    # three triangles sharing edge (0, 1): non-manifold
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]]
    m = Mesh(v, [[0, 1, 2], [1, 0, 3], [0, 1, 4]])
    rep = json.loads(quality_report_json(m))
    assert rep["non_manifold_edges"] == 1
    assert rep["boundary_edges"] == 6
    closed = quality_report(icosphere(1))
    assert closed["boundary_edges"] == 0 and closed["non_manifold_edges"] == 0


def test_face_areas_positive(sphere1):
    assert (face_areas(sphere1) > 0).all()
