import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyq.errors import DegenerateInput
from polyq.geometry import builtin, ear_clip, equilateral, l_shape, right_isoceles, unit_square
from polyq.mesh import TriangleMesh, build_mesh, mesh_quality, refine, triangulate


def check_mesh(mesh, poly):
    areas = mesh.areas()
    assert (areas > 0).all()
    assert areas.sum() == pytest.approx(poly.area, rel=1e-9)
    edges, counts = mesh.edges()
    assert counts.max() <= 2
    # Euler characteristic of a disk
    assert mesh.n_nodes - len(edges) + mesh.n_tri == 1
    # boundary edges lie on the polygon boundary, and boundary nodes are exactly those on it
    bedges = edges[counts == 1]
    for t in (0.0, 0.37, 1.0):
        pts = (1 - t) * mesh.nodes[bedges[:, 0]] + t * mesh.nodes[bedges[:, 1]]
        assert poly.distance_to_boundary(pts).max() <= 1e-12
    on_boundary = np.flatnonzero(poly.distance_to_boundary(mesh.nodes) <= 1e-12)
    np.testing.assert_array_equal(np.sort(mesh.boundary_nodes), on_boundary)
    np.testing.assert_array_equal(np.unique(bedges), on_boundary)
    # polygon vertices are nodes
    for v in poly.vertices:
        assert np.hypot(*(mesh.nodes - v).T).min() == 0.0


def nodes_strictly_inside_triangles(mesh):
    p = mesh.nodes[mesh.triangles]
    bad = 0
    for i, (a, b, c) in enumerate(p):
        lo, hi = np.minimum(np.minimum(a, b), c), np.maximum(np.maximum(a, b), c)
        cand = np.flatnonzero(((mesh.nodes > lo) & (mesh.nodes < hi)).all(axis=1))
        for j in cand:
            if j in mesh.triangles[i]:
                continue
            q = mesh.nodes[j]
            d = [(b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]),
                 (c[0] - b[0]) * (q[1] - b[1]) - (c[1] - b[1]) * (q[0] - b[0]),
                 (a[0] - c[0]) * (q[1] - c[1]) - (a[1] - c[1]) * (q[0] - c[0])]
            if min(d) > 1e-14:
                bad += 1
    return bad


def test_triangle_coarse_target_gives_one_element():
    tri = right_isoceles()
    m = triangulate(tri, 10.0)
    assert m.n_tri == 1
    assert len(m.boundary_nodes) == 3


def test_square_half():
    sq = unit_square()
    m = triangulate(sq, 0.5)
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-12)
    assert (m.areas() > 0).all()
    assert m.h <= 0.5
    check_mesh(m, sq)


def test_lshape_has_reentrant_corner():
    L = l_shape()
    m = triangulate(L, 0.2)
    assert np.any((m.nodes == (1.0, 1.0)).all(axis=1))
    assert m.areas().sum() == pytest.approx(3.0, abs=1e-9)
    check_mesh(m, L)


@pytest.mark.parametrize("name,h", [("square", 0.1), ("L-shape", 0.15), ("pi8-triangle", 0.1),
                                    ("equilateral", 0.07), ("right-isoceles", 0.05),
                                    ("rectangle", 0.3)])
def test_builtin_meshes_valid(name, h):
    poly = builtin(name)
    m = triangulate(poly, h)
    assert m.h <= h
    check_mesh(m, poly)
    assert mesh_quality(m).min_angle >= min(15.0, math.degrees(poly.interior_angles.min()) / 2)
    assert nodes_strictly_inside_triangles(m) == 0


def test_refine_single_triangle():
    m = triangulate(right_isoceles(), 10.0)
    r = refine(m)
    assert r.n_tri == 4
    assert r.n_nodes == 6
    assert r.level == 1


def test_refine_twice_square():
    m = triangulate(unit_square(), 0.5)
    r = refine(refine(m))
    assert r.h == pytest.approx(0.125)
    assert mesh_quality(r).h == pytest.approx(0.125)
    assert r.n_tri == 16 * m.n_tri


@pytest.mark.parametrize("name", ["L-shape", "pi8-triangle", "equilateral"])
def test_refinement_area_exact_and_nested(name):
    poly = builtin(name)
    m = triangulate(poly, 0.3)
    r = refine(m)
    assert r.areas().sum() == pytest.approx(m.areas().sum(), abs=1e-12)
    np.testing.assert_array_equal(r.nodes[:m.n_nodes], m.nodes)
    check_mesh(r, poly)
    assert r.n_tri == 4 * m.n_tri


def test_quality_examples():
    assert mesh_quality(build_mesh(unit_square(), 1 / 8)).min_angle == pytest.approx(45.0)
    q = mesh_quality(triangulate(equilateral(), 2.0))
    assert q.min_angle == pytest.approx(60.0)
    assert q.max_angle == pytest.approx(60.0)
    assert mesh_quality(triangulate(l_shape(), 0.1)).min_angle >= 15.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 1.5))
def test_triangulate_invariants_random_h(h):
    L = l_shape()
    m = triangulate(L, h)
    assert m.h <= h
    check_mesh(m, L)


def test_collinear_ear_rejected():
    with pytest.raises(DegenerateInput):
        ear_clip(np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]))


def test_nonpositive_h_rejected():
    with pytest.raises(ValueError):
        triangulate(unit_square(), 0.0)


def test_mesh_json_round_trip(tmp_path):
    m = build_mesh(l_shape(), 0.3, 1)
    m.save(tmp_path / "m.json")
    q = TriangleMesh.load(tmp_path / "m.json")
    np.testing.assert_array_equal(m.nodes, q.nodes)
    np.testing.assert_array_equal(m.triangles, q.triangles)
    np.testing.assert_array_equal(m.boundary_nodes, q.boundary_nodes)
    assert q.level == 1


def test_mesh_is_deterministic():
    a = triangulate(l_shape(), 0.13)
    b = triangulate(l_shape(), 0.13)
    np.testing.assert_array_equal(a.nodes, b.nodes)
    np.testing.assert_array_equal(a.triangles, b.triangles)
