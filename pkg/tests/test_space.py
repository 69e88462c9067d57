import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tpfa.analysis import sine_product_oracle
from tpfa.errors import UndefinedValue
from tpfa.mesh import generate_acute_triangular_grid, generate_square_grid
from tpfa.quadrature import gauss_legendre, integrate_cells
from tpfa.singular import SingularSolution
from tpfa.space import (
    DiscreteField,
    affine_oracle,
    canonical_interpolant,
    cell_l2_norm,
    consistent_gradient,
    discrete_norm,
    face_points,
    harmonic_face_values,
    inflated_gradient,
    mean_normal_gradient,
    mean_normal_gradient_by_boundary,
    normal_derivative,
    oscillation,
)

MESHES = {
    "square3": generate_square_grid(3),
    "acute2": generate_acute_triangular_grid(2),
}
seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def bump(mesh, cell):
    u = DiscreteField.zeros(mesh)
    u.cell[cell] = 1.0
    return u


def test_normal_derivative_of_a_bump(grid2):
    g = normal_derivative(bump(grid2, 0)).values
    own = grid2.cone_cell == 0
    np.testing.assert_allclose(g[own], -4.0)
    np.testing.assert_allclose(g[~own], 0.0)


def test_discrete_norm_of_a_bump(grid2):
    # four cones with |s|/d = 2 and jump -1
    assert discrete_norm(bump(grid2, 0)) == pytest.approx(math.sqrt(8.0), rel=1e-14)


def test_normal_derivative_affine_exact(grid4):
    a = np.array([0.7, -1.3])
    phi = affine_oracle(a)
    u = canonical_interpolant(phi, grid4)
    inner = np.isin(grid4.cone_face, grid4.interior_faces)
    g = normal_derivative(u).values
    np.testing.assert_allclose(g[inner], (grid4.cone_normal @ a)[inner], atol=1e-13)


def test_inflated_gradient_is_not_consistent(grid2):
    a = np.array([1.0, 0.0])
    u = canonical_interpolant(affine_oracle(a), grid2)
    inner = np.isin(grid2.cone_face, grid2.interior_faces)
    ig = inflated_gradient(u).values[inner]
    n = grid2.cone_normal[inner]
    np.testing.assert_allclose(ig, 2.0 * (n @ a)[:, None] * n, atol=1e-13)
    assert not np.allclose(ig, a)


@pytest.mark.parametrize("name", list(MESHES))
def test_consistent_gradient_exact_on_affine(name):
    mesh = MESHES[name]
    a = np.array([0.3, -2.1])
    phi = affine_oracle(a, 0.4)
    cells = phi.value(mesh.cell_points)
    u = DiscreteField(mesh, cells, harmonic_face_values(mesh, cells))
    # boundary faces carry 0, so test against the cells not touching the boundary
    touch = np.zeros(mesh.n_cells, bool)
    touch[mesh.cone_cell[np.isin(mesh.cone_face, mesh.boundary_faces)]] = True
    g = consistent_gradient(u).values
    np.testing.assert_allclose(g[~touch], np.broadcast_to(a, g[~touch].shape), atol=1e-12)


def test_consistent_gradient_exact_with_boundary_values(grid4):
    # a.x - c vanishes on x=... no affine function vanishes on the whole boundary,
    # so use the point interpolant on an interior patch instead
    a = np.array([1.5, 0.5])
    phi = affine_oracle(a)
    u = canonical_interpolant(phi, grid4)
    touch = np.zeros(grid4.n_cells, bool)
    touch[grid4.cone_cell[np.isin(grid4.cone_face, grid4.boundary_faces)]] = True
    g = consistent_gradient(u).values
    np.testing.assert_allclose(g[~touch], np.broadcast_to(a, g[~touch].shape), atol=1e-12)


def test_consistent_gradient_constant_is_zero(grid4):
    u = DiscreteField(grid4, np.full(grid4.n_cells, 3.0), np.full(grid4.n_interior, 3.0))
    touch = np.zeros(grid4.n_cells, bool)
    touch[grid4.cone_cell[np.isin(grid4.cone_face, grid4.boundary_faces)]] = True
    np.testing.assert_allclose(consistent_gradient(u).values[~touch], 0.0, atol=1e-13)


def test_consistent_gradient_brute_force(two_cells, rng):
    m = two_cells
    u = DiscreteField.random(m, rng)
    face = np.zeros(m.n_faces)
    face[m.interior_faces] = u.face
    expect = np.zeros((2, 2))
    for c in range(m.n_cones):
        K, s = m.cone_cell[c], m.cone_face[c]
        lever = m.face_centroid[s] - m.cell_points[K]
        expect[K] += m.face_measure[s] * lever * (face[s] - u.cell[K]) / m.cone_distance[c]
    expect /= m.cell_measure[:, None]
    np.testing.assert_allclose(consistent_gradient(u).values, expect, rtol=1e-14)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, name=st.sampled_from(list(MESHES)))
def test_norm_equivalences(seed, name):
    mesh = MESHES[name]
    u = DiscreteField.random(mesh, np.random.default_rng(seed))
    n2 = discrete_norm(u) ** 2
    d = mesh.dim
    assert d * normal_derivative(u).l2_norm() ** 2 == pytest.approx(n2, rel=1e-12)
    assert inflated_gradient(u).l2_norm() ** 2 / d == pytest.approx(n2, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, name=st.sampled_from(list(MESHES)))
def test_discrete_poincare(seed, name):
    mesh = MESHES[name]
    u = DiscreteField.random(mesh, np.random.default_rng(seed))
    assert cell_l2_norm(u) <= mesh.domain_diameter * discrete_norm(u)


@settings(max_examples=200, deadline=None)
@given(seed=seeds, lam=st.floats(-1e3, 1e3).filter(lambda x: x == 0 or abs(x) > 1e-100))
def test_norm_homogeneity(seed, lam):
    mesh = MESHES["acute2"]
    u = DiscreteField.random(mesh, np.random.default_rng(seed))
    assert discrete_norm(u * lam) == pytest.approx(abs(lam) * discrete_norm(u), rel=1e-12, abs=1e-300)


@settings(max_examples=50, deadline=None)
@given(uk=st.floats(-5, 5), ul=st.floats(-5, 5), dk=st.floats(0.01, 2), dl=st.floats(0.01, 2))
def test_harmonic_value_minimizes_flux_energy(uk, ul, dk, dl):
    s_h = (dl * uk + dk * ul) / (dk + dl)
    grid = np.linspace(min(uk, ul) - 1, max(uk, ul) + 1, 4001)
    energy = (grid - uk) ** 2 / dk + (grid - ul) ** 2 / dl
    e_h = (s_h - uk) ** 2 / dk + (s_h - ul) ** 2 / dl
    assert e_h <= energy.min() + 1e-12


def test_harmonic_matches_module(grid4, rng):
    cells = rng.uniform(-1, 1, grid4.n_cells)
    f = harmonic_face_values(grid4, cells)
    inner = grid4.interior_faces
    K = grid4.cone_cell[grid4.face_cones[inner, 0]]
    L = grid4.cone_cell[grid4.face_cones[inner, 1]]
    # equal distances on the square grid
    np.testing.assert_allclose(f, 0.5 * (cells[K] + cells[L]), rtol=1e-14)


def test_mean_normal_gradient_affine(tri2):
    a = np.array([2.0, -1.0])
    g = mean_normal_gradient_by_boundary(affine_oracle(a).value, tri2)
    np.testing.assert_allclose(g, tri2.cone_normal @ a, atol=1e-12)


def test_mean_normal_gradient_sine_vs_tensor_gauss(grid2):
    phi = sine_product_oracle()
    g = mean_normal_gradient(phi, grid2).values
    # independent reference: tensor Gauss on the cone triangle mapped from the unit square
    x, w = gauss_legendre(40)
    from tpfa.quadrature import cone_triangles
    xk, a, b = cone_triangles(grid2)
    for c in range(grid2.n_cones):
        s, t = np.meshgrid(x, x, indexing="ij")
        # Duffy map (s, t) -> xk + s (a - xk) + s t (b - a), Jacobian s |det|
        pts = xk[c] + s[..., None] * (a[c] - xk[c]) + (s * t)[..., None] * (b[c] - a[c])
        u, v = a[c] - xk[c], b[c] - a[c]
        det = abs(u[0] * v[1] - u[1] * v[0])
        vals = phi.gradient(pts) @ grid2.cone_normal[c]
        ref = np.sum(w[:, None] * w[None, :] * s * det * vals) / grid2.cone_measure[c]
        assert g[c] == pytest.approx(ref, abs=1e-9)


def test_mean_normal_gradient_is_a_contraction(tri4):
    phi = sine_product_oracle()
    g = mean_normal_gradient(phi, tri4)
    full = integrate_cells(tri4, lambda x: np.sum(phi.gradient(x) ** 2, axis=-1)).sum()
    assert g.l2_norm() ** 2 <= full + 1e-8


def test_oscillation_identity_on_unit_square(unit_cell):
    theta = oscillation(lambda x: np.asarray(x, dtype=float), unit_cell)
    assert theta ** 2 == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_oscillation_constant_is_zero(tri2):
    assert oscillation(lambda x: np.ones(np.shape(x)), tri2) == pytest.approx(0.0, abs=1e-14)


def test_oscillation_halves_with_h():
    phi = sine_product_oracle()
    a = oscillation(phi, generate_square_grid(16))
    b = oscillation(phi, generate_square_grid(32))
    assert a / b == pytest.approx(2.0, rel=0.01)


def test_oscillation_homogeneous(tri2):
    phi = sine_product_oracle()
    t1 = oscillation(phi.gradient, tri2)
    t2 = oscillation(lambda x: -3.5 * phi.gradient(x), tri2)
    assert t2 == pytest.approx(3.5 * t1, rel=1e-12)


def test_interpolant_modes_agree_on_affine(tri2):
    phi = affine_oracle([1.0, 2.0], -0.5)
    p = canonical_interpolant(phi, tri2, "point")
    h = canonical_interpolant(phi, tri2, "harmonic")
    np.testing.assert_allclose(p.cell, h.cell)
    np.testing.assert_allclose(p.face, h.face, atol=1e-13)


def test_face_points_are_edge_midpoints_for_circumcenters(tri2):
    # for circumcentered triangles the segment [x_K, x_L] meets the edge at its middle
    np.testing.assert_allclose(face_points(tri2), tri2.face_centroid, atol=1e-14)


def test_singular_interpolant_is_finite(tri4):
    u = canonical_interpolant(SingularSolution().oracle(), tri4)
    assert np.all(np.isfinite(u.cell)) and np.all(np.isfinite(u.face))


def test_interpolant_undefined_at_singular_point():
    mesh = generate_square_grid(3)  # the center (1/2, 1/2) is a cell point
    with pytest.raises(UndefinedValue):
        canonical_interpolant(SingularSolution().oracle(), mesh)


def test_gradient_matches_finite_differences(rng):
    phi = sine_product_oracle()
    assert phi.gradient_fd_error(rng.uniform(0, 1, (50, 2))) < 1e-6
    s = SingularSolution().oracle()
    pts = rng.uniform(0.05, 0.95, (50, 2))
    pts = pts[np.abs(np.abs(pts[:, 0] - 0.5) - np.abs(pts[:, 1] - 0.5)) > 0.01]
    assert s.gradient_fd_error(pts) < 1e-6


def test_csv_dump(grid2):
    u = DiscreteField(grid2, np.arange(4.0), np.full(grid2.n_interior, 0.5))
    lines = u.to_csv().splitlines()
    assert lines[0] == "cell,0,0.0"
    assert sum(ln.startswith("face,") for ln in lines) == grid2.n_interior
