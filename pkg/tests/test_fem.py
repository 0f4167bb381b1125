import math

import numpy as np
import pytest

from conftest import lattice_modes
from polyq.errors import SingularElement, TooManyModes
from polyq.fem import (assemble, convergence_study, element_matrices, rayleigh_quotients,
                       richardson, solve_lowest, weyl_check, weyl_predicted)
from polyq.geometry import l_shape, right_isoceles, unit_square
from polyq.mesh import TriangleMesh, build_mesh, triangulate

PI2 = math.pi**2


def test_reference_element_stiffness():
    ke, me, area = element_matrices(np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]]))
    np.testing.assert_allclose(ke[0], 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]),
                               atol=1e-15)
    np.testing.assert_allclose(me[0], (np.ones((3, 3)) + np.eye(3)) / 24, atol=1e-16)
    assert area[0] == 0.5


def test_degenerate_element_rejected():
    with pytest.raises(SingularElement):
        element_matrices(np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]]))


def test_square_half_rowsum_and_mass():
    m = triangulate(unit_square(), 0.5)
    s = assemble(m)
    inner = m.interior_nodes
    assert len(inner) > 0
    rows = np.asarray(s.stiffness_full.sum(axis=1)).ravel()
    assert np.abs(rows[inner]).max() <= 1e-12
    assert s.mass_full.sum() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("poly,h", [(l_shape(), 0.2), (right_isoceles(), 0.1)])
def test_system_invariants(poly, h):
    s = assemble(build_mesh(poly, h))
    assert s.mass_full.sum() == pytest.approx(poly.area, abs=1e-10)
    for A in (s.stiffness, s.mass):
        d = abs(A - A.T).max()
        assert d <= 1e-12 * abs(A).max()
    assert (np.asarray(s.mass.sum(axis=1)).ravel() > 0).all()
    assert not np.isin(s.interior, s.mesh.boundary_nodes).any()
    assert s.dim == s.mesh.n_nodes - len(s.mesh.boundary_nodes)


def test_spectrum_invariants(square_spectrum_16):
    sp = square_spectrum_16
    assert sp.eigenvalues[0] > 0
    assert (np.diff(sp.eigenvalues) >= 0).all()
    assert sp.residuals.max() <= 1e-8
    assert sp.orthonormality_error <= 1e-8
    V = sp.coefficients
    G = V.T @ (sp.system.mass @ V)
    assert np.abs(G - np.eye(sp.k)).max() <= 1e-8
    assert np.abs(sp.vectors[sp.mesh.boundary_nodes]).max() == 0.0
    np.testing.assert_allclose(rayleigh_quotients(sp), sp.eigenvalues, rtol=1e-8)


def test_square_fundamental_richardson():
    sq = unit_square()
    e = [solve_lowest(assemble(build_mesh(sq, h)), 1).eigenvalues[0] for h in (1 / 16, 1 / 32)]
    assert e[0] > e[1] > 2 * PI2
    assert abs(richardson(*e) - 2 * PI2) / (2 * PI2) <= 1e-3


def test_square_near_double(square_spectrum_16):
    a, b = square_spectrum_16.eigenvalues[1:3]
    assert abs(a - b) / a <= 1e-3
    assert a == pytest.approx(5 * PI2, rel=0.02)


def test_triangle_fundamental():
    tri = right_isoceles(math.pi)
    e = [solve_lowest(assemble(build_mesh(tri, h)), 1).eigenvalues[0]
         for h in (math.pi / 16, math.pi / 32)]
    assert e[0] > e[1] > 5.0
    assert richardson(*e) == pytest.approx(5.0, rel=5e-3)


def test_square_eigenvalues_against_lattice(square_spectrum_64):
    E, _, _ = lattice_modes(2000)
    got = square_spectrum_64.eigenvalues[:len(E)]
    # linear elements overestimate; relative error grows like E h^2
    assert (got >= E * (1 - 1e-12)).all()
    assert ((got - E) / E <= 0.05 * E / 2000 + 1e-4).all()


def test_weyl_count_exact_on_fine_mesh():
    sq = unit_square()
    spec = solve_lowest(assemble(build_mesh(sq, 1 / 64, 2)), 75)
    E, _, _ = lattice_modes(1000.0)
    w = weyl_check(spec, sq, 1000.0)
    assert w["predicted"] == pytest.approx(69.5, abs=0.05)
    assert w["counted"] == len(E) == 71


def test_weyl_counted_nondecreasing(square_spectrum_16):
    sq = unit_square()
    Es = np.linspace(10, square_spectrum_16.eigenvalues[-1], 40)
    counts = [weyl_check(square_spectrum_16, sq, E)["counted"] for E in Es]
    assert (np.diff(counts) >= 0).all()
    assert weyl_predicted(sq, 0.0) == 0.0


def test_weyl_lshape(lshape_spectrum, lshape):
    w = weyl_check(lshape_spectrum, lshape)
    assert abs(w["rel_gap"]) <= 0.05
    assert w["E"] == pytest.approx(0.8 * lshape_spectrum.eigenvalues[-1])


def test_convergence_study_square():
    rows = convergence_study(unit_square(), 1, 3, h0=0.25)
    e = [r["eigenvalues"][0] for r in rows]
    assert e[0] > e[1] > e[2] > 2 * PI2
    assert rows[2]["ratio"][0] == pytest.approx(4.0, rel=0.25)
    assert rows[1]["h"] == pytest.approx(0.5 * rows[0]["h"])


def test_convergence_study_rejects_k0():
    with pytest.raises(TooManyModes):
        convergence_study(unit_square(), 0, 3)
    with pytest.raises(ValueError):
        convergence_study(unit_square(), 1, 1)


def test_too_many_modes():
    s = assemble(build_mesh(unit_square(), 1 / 8))
    with pytest.raises(TooManyModes):
        solve_lowest(s, s.dim // 3 + 1)
    with pytest.raises(TooManyModes):
        solve_lowest(s, 0)


def test_deterministic_given_seed(square):
    s = assemble(build_mesh(square, 1 / 16))
    a = solve_lowest(s, 30, seed=7)
    b = solve_lowest(s, 30, seed=7)
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    np.testing.assert_array_equal(a.coefficients, b.coefficients)


def test_slicing_matches_single_run(lshape):
    s = assemble(build_mesh(lshape, 1 / 16))
    one = solve_lowest(s, 150, window=160)
    sliced = solve_lowest(s, 150, window=40)
    np.testing.assert_allclose(sliced.eigenvalues, one.eigenvalues, rtol=1e-10)
    # same invariant subspaces: projectors agree on non-degenerate modes
    M = s.mass
    overlap = np.abs(one.coefficients.T @ (M @ sliced.coefficients))
    gaps = np.diff(one.eigenvalues) / one.eigenvalues[1:]
    simple = np.flatnonzero((np.r_[1, gaps] > 1e-6) & (np.r_[gaps, 1] > 1e-6))
    np.testing.assert_allclose(overlap[simple, simple], 1.0, atol=1e-8)


def _square_symmetry(mesh, g):
    """Permutation of nodes induced by the symmetry g, or None if the mesh is not invariant."""
    mapped = g(mesh.nodes)
    key = {tuple(np.round(p, 12)): i for i, p in enumerate(mesh.nodes)}
    perm = np.array([key.get(tuple(np.round(p, 12)), -1) for p in mapped])
    if (perm < 0).any():
        return None
    tris = {tuple(sorted(t)) for t in mesh.triangles}
    if {tuple(sorted(perm[t])) for t in mesh.triangles} != tris:
        return None
    return perm


D4 = {
    "rot90": (lambda p: np.column_stack([1 - p[:, 1], p[:, 0]]), False),
    "rot180": (lambda p: 1 - p, False),
    "flip_x": (lambda p: np.column_stack([1 - p[:, 0], p[:, 1]]), True),
    "diag": (lambda p: p[:, ::-1].copy(), True),
}


@pytest.mark.parametrize("name", sorted(D4))
def test_square_mesh_d4_equivariance(name, square):
    g, flips = D4[name]
    mesh = build_mesh(square, 1 / 16)
    assert _square_symmetry(mesh, g) is not None
    tris = mesh.triangles[:, ::-1].copy() if flips else mesh.triangles
    moved = TriangleMesh(g(mesh.nodes), tris, mesh.boundary_nodes, mesh.h)
    a = solve_lowest(assemble(mesh), 60).eigenvalues
    b = solve_lowest(assemble(moved), 60).eigenvalues
    np.testing.assert_allclose(b, a, rtol=1e-10)
