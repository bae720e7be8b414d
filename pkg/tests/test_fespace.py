import math

import numpy as np
import pytest

from lvpp.fespace import (
    FeSpace,
    FeSpaceError,
    assemble_coupling,
    assemble_load,
    assemble_mass,
    assemble_moment,
    assemble_stiffness,
    assemble_weighted_mass_w,
    compute_error_norms,
    integrate,
    lumped_mass_diagonal,
    triangle_quadrature,
    vertex_quadrature,
)
from lvpp.linalg import solve_spd
from lvpp.mesh import Mesh, rect_mesh, unit_square_mesh

RNG = np.random.default_rng(7)


def reference_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def test_dof_counts():
    mesh = unit_square_mesh(2)
    assert FeSpace(mesh, "p1b").ndof == 17    # 9 vertices + 8 bubbles
    assert FeSpace(mesh, "p0").ndof == 8
    assert FeSpace(mesh, "p1").ndof == 9
    with pytest.raises(FeSpaceError):
        FeSpace(mesh, "p7")


def test_quadrature_exactness():
    # random polynomials up to the declared degree integrate exactly
    for degree in (1, 2, 4, 6):
        quad = triangle_quadrature(degree)
        assert np.all(quad.weights > 0)
        assert quad.weights.sum() == pytest.approx(0.5, abs=1e-14)
        for _ in range(5):
            a = RNG.integers(0, degree + 1)
            b = RNG.integers(0, degree - a + 1)
            exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = np.sum(quad.weights * quad.points[:, 1] ** a * quad.points[:, 2] ** b)
            assert got == pytest.approx(exact, abs=1e-13)


def test_vertex_rule_weights():
    quad = vertex_quadrature()
    assert quad.weights.sum() == pytest.approx(0.5)
    assert np.allclose(quad.points, np.eye(3))


def test_reference_stiffness_block():
    sp = FeSpace(reference_triangle(), "p1")
    K = assemble_stiffness(sp).toarray()
    expect = 0.5 * np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    assert np.allclose(K, expect, atol=1e-14)


def test_stiffness_kernel_contains_constants():
    sp = FeSpace(unit_square_mesh(3), "p1b")
    K = assemble_stiffness(sp)
    ones = np.zeros(sp.ndof)
    ones[: sp.mesh.num_vertices] = 1.0  # constant = vertex hats only
    assert np.max(np.abs(K @ ones)) < 1e-12


def test_strip_laplacian_matches_quadratic():
    # -u'' = 2 on (0,1), u(0)=u(1)=0 -> u = x(1-x); P1 is nodally exact
    nx = 16
    mesh = rect_mesh(nx, 1, 0.0, 1.0, 0.0, 1.0 / nx)
    sp = FeSpace(mesh, "p1")
    K = assemble_stiffness(sp).tocsr()
    F = assemble_load(sp, lambda x, y: 2.0 * np.ones_like(x))
    fixed = sp.boundary_dofs(("left", "right"))
    free = np.setdiff1d(np.arange(sp.ndof), fixed)
    u = np.zeros(sp.ndof)
    u[free] = solve_spd(K[free][:, free].tocsc(), F[free])
    exact = mesh.vertices[:, 0] * (1.0 - mesh.vertices[:, 0])
    assert np.max(np.abs(u - exact)) < 5e-13


def test_coupling_matrix_values():
    tri = reference_triangle()
    B = assemble_coupling(FeSpace(tri, "p1b"), FeSpace(tri, "p0")).toarray()
    area = 0.5
    assert np.allclose(B[:3, 0], area / 3.0)           # hats: partition of unity
    assert B[3, 0] == pytest.approx(27 * area / 60.0)  # bubble moment 9|T|/20
    mesh = unit_square_mesh(2)
    B = assemble_coupling(FeSpace(mesh, "p1b"), FeSpace(mesh, "p0")).tocsr()
    # column sums = cell areas (partition of unity incl. bubble? no: hats only)
    hats = np.asarray(B[: mesh.num_vertices].sum(axis=0)).ravel()
    assert np.allclose(hats, mesh.cell_areas())
    # zero for non-incident pairs: sparsity per column is 4 entries
    assert B.tocsc().getnnz(axis=0).max() == 4
    with pytest.raises(FeSpaceError):
        assemble_coupling(FeSpace(mesh, "p1b"), FeSpace(unit_square_mesh(2), "p0"))


def test_weighted_mass_diagonal():
    mesh = unit_square_mesh(2)
    w_space = FeSpace(mesh, "p0")
    areas = mesh.cell_areas()
    assert np.allclose(assemble_weighted_mass_w(w_space, np.ones(8)), areas)
    val = math.exp(math.log(2.0)) + 1e-6
    assert np.allclose(
        assemble_weighted_mass_w(w_space, np.full(8, val)), val * areas
    )
    p1 = FeSpace(mesh, "p1")
    lumped = assemble_weighted_mass_w(p1, np.ones(p1.ndof))
    assert lumped.sum() == pytest.approx(4.0)  # lumped mass sums to |Omega|
    with pytest.raises(FeSpaceError):
        assemble_weighted_mass_w(w_space, np.zeros(8))


def test_fortin_moment_condensation_invertible():
    # at lowest order the single bubble matches the single constant moment:
    # the bubble/constant coupling entry is positive on every cell
    mesh = unit_square_mesh(4)
    B = assemble_coupling(FeSpace(mesh, "p1b"), FeSpace(mesh, "p0")).tocsr()
    bubble_rows = B[mesh.num_vertices:]
    diag = bubble_rows.diagonal()
    assert np.all(diag > 0)
    assert np.allclose(diag, 0.45 * mesh.cell_areas())


def test_error_norms():
    mesh = unit_square_mesh(8)
    sp = FeSpace(mesh, "p1")
    exact = lambda x, y: x + 2 * y
    coefs = sp.interpolate(exact)
    errs = compute_error_norms(coefs, exact, sp, lambda x, y: (np.ones_like(x), 2 * np.ones_like(x)))
    assert errs["L2"] < 1e-12 and errs["H1_semi"] < 1e-12 and errs["Linf_sampled"] < 1e-12
    zero = np.zeros(sp.ndof)
    errs = compute_error_norms(zero, lambda x, y: x, sp)
    assert errs["L2"] == pytest.approx(math.sqrt(4.0 / 3.0), rel=1e-12)


def test_interpolation_decay_order_two():
    exact = lambda x, y: x**4
    errs = []
    for n in (4, 8, 16):
        sp = FeSpace(unit_square_mesh(n), "p1")
        errs.append(compute_error_norms(sp.interpolate(exact), exact, sp)["L2"])
    rates = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(abs(r - 2.0) < 0.25 for r in rates)


def test_assembly_helpers():
    mesh = unit_square_mesh(3)
    sp = FeSpace(mesh, "p1")
    quad = triangle_quadrature(2)
    mom = assemble_moment(sp, np.ones((mesh.num_cells, quad.npoints)), quad)
    assert mom.sum() == pytest.approx(4.0)
    assert integrate(mesh, lambda x, y: x * y + 1.0) == pytest.approx(4.0, abs=1e-12)
    M = assemble_mass(sp)
    assert np.asarray(M.sum()) == pytest.approx(4.0)
    assert lumped_mass_diagonal(sp).sum() == pytest.approx(4.0)
