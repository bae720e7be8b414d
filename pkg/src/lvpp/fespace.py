# -*- coding: utf-8 -*-
"""
Finite element spaces, quadrature, and matrix assembly on triangles.

Three scalar spaces cover everything the solvers need: continuous P1
("p1"), P1 enriched with one cubic interior bubble per cell ("p1b"), and
piecewise constants ("p0").  Assembly is vectorized over cells and returns
scipy CSR matrices.
"""
import numpy as np
from scipy import sparse


class FeSpaceError(ValueError):
    pass


# Symmetric Gauss rules on the reference triangle {(x,y): x,y >= 0, x+y <= 1},
# stored as barycentric points and weights summing to the reference area 1/2.
def _perm3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _perm6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


_RULES = {
    1: ([(1 / 3, 1 / 3, 1 / 3)], [1.0]),
    2: (_perm3(2 / 3, 1 / 6), [1 / 3] * 3),
    4: (
        _perm3(0.108103018168070, 0.445948490915965)
        + _perm3(0.816847572980459, 0.091576213509771),
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    6: (
        _perm3(0.501426509658179, 0.249286745170910)
        + _perm3(0.873821971016996, 0.063089014491502)
        + _perm6(0.053145049844816, 0.310352451033785, 0.636502499121399),
        [0.116786275726379] * 3
        + [0.050844906370207] * 3
        + [0.082851075618374] * 6,
    ),
}


class QuadratureRule:
    """Barycentric points and weights; weights sum to 1/2."""

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = degree

    @property
    def npoints(self):
        return len(self.weights)


def triangle_quadrature(degree):
    """Smallest stored symmetric rule exact for polynomials of ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            pts, wts = _RULES[d]
            return QuadratureRule(pts, 0.5 * np.asarray(wts), d)
    raise FeSpaceError(f"no quadrature rule of degree {degree}")


def vertex_quadrature():
    """Nodal (mass-lumping) rule: the three vertices with weights 1/6."""
    pts = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    return QuadratureRule(pts, [1 / 6] * 3, 1)


class FeSpace:
    """Scalar finite element space over a mesh.

    kind is one of "p1" (continuous vertex elements), "p1b" (vertex
    elements plus one cubic bubble per cell, bubble dofs trailing the
    vertex dofs), or "p0" (one constant per cell).
    """

    def __init__(self, mesh, kind):
        if kind not in ("p1", "p1b", "p0"):
            raise FeSpaceError(f"unknown element kind {kind!r}")
        self.mesh = mesh
        self.kind = kind
        nv, nc = mesh.num_vertices, mesh.num_cells
        if kind == "p1":
            self.ndof = nv
            self.cell_dofs = mesh.cells.copy()
        elif kind == "p1b":
            self.ndof = nv + nc
            self.cell_dofs = np.column_stack([mesh.cells, nv + np.arange(nc)])
        else:
            self.ndof = nc
            self.cell_dofs = np.arange(nc, dtype=np.int64).reshape(-1, 1)
        self._geom = None

    @property
    def nloc(self):
        return self.cell_dofs.shape[1]

    @property
    def conforming(self):
        return self.kind in ("p1", "p1b")

    def basis(self, bary):
        """Basis values at barycentric points; shape (nloc, npts)."""
        lam = np.asarray(bary, dtype=float).T  # (3, npts)
        if self.kind == "p0":
            return np.ones((1, lam.shape[1]))
        vals = lam.copy()
        if self.kind == "p1b":
            bubble = 27.0 * lam[0] * lam[1] * lam[2]
            vals = np.vstack([vals, bubble])
        return vals

    def basis_ref_grad(self, bary):
        """Reference-element gradients at barycentric points; (nloc, npts, 2)."""
        lam = np.asarray(bary, dtype=float).T
        npts = lam.shape[1]
        if self.kind == "p0":
            return np.zeros((1, npts, 2))
        # reference triangle (0,0), (1,0), (0,1): lam = (1-x-y, x, y)
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grads = np.repeat(dlam[:, None, :], npts, axis=1)
        if self.kind == "p1b":
            gb = 27.0 * (
                lam[1] * lam[2] * dlam[0][:, None]
                + lam[0] * lam[2] * dlam[1][:, None]
                + lam[0] * lam[1] * dlam[2][:, None]
            ).T
            grads = np.vstack([grads, gb[None, :, :]])
        return grads

    def geometry(self):
        """Per-cell affine maps: inverse-transpose Jacobians and areas."""
        if self._geom is None:
            p = self.mesh.vertices[self.mesh.cells]
            J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            inv_t = np.empty_like(J)
            inv_t[:, 0, 0] = J[:, 1, 1] / det
            inv_t[:, 0, 1] = -J[:, 1, 0] / det
            inv_t[:, 1, 0] = -J[:, 0, 1] / det
            inv_t[:, 1, 1] = J[:, 0, 0] / det
            self._geom = (inv_t, np.abs(det))
        return self._geom

    def quad_points_xy(self, quad):
        """Physical coordinates of quadrature points; (ncells, nq, 2)."""
        p = self.mesh.vertices[self.mesh.cells]
        lam = quad.points
        return np.einsum("qi,cix->cqx", lam, p)

    def phys_grads(self, quad):
        """Physical basis gradients at quadrature points; (ncells, nloc, nq, 2)."""
        inv_t, _ = self.geometry()
        ref = self.basis_ref_grad(quad.points)
        return np.einsum("cxy,lqy->clqx", inv_t, ref)

    def boundary_dofs(self, tags=None):
        """Constrained dof indices (vertex dofs only; bubbles have zero trace)."""
        if self.kind == "p0":
            return np.array([], dtype=np.int64)
        return self.mesh.boundary_vertices(tags)

    def interpolate(self, fn):
        """Nodal/cellwise interpolation of a callable fn(x, y)."""
        if self.kind == "p0":
            c = self.mesh.centroids()
            return np.asarray(fn(c[:, 0], c[:, 1]), dtype=float) * np.ones(self.ndof)
        v = self.mesh.vertices
        vals = np.asarray(fn(v[:, 0], v[:, 1]), dtype=float) * np.ones(v.shape[0])
        if self.kind == "p1b":
            vals = np.concatenate([vals, np.zeros(self.mesh.num_cells)])
        return vals

    def eval_at_quad(self, coefs, quad):
        """Field values at quadrature points; (ncells, nq)."""
        vals = self.basis(quad.points)
        return np.einsum("cl,lq->cq", coefs[self.cell_dofs], vals)

    def grad_at_quad(self, coefs, quad):
        """Field gradients at quadrature points; (ncells, nq, 2)."""
        grads = self.phys_grads(quad)
        return np.einsum("cl,clqx->cqx", coefs[self.cell_dofs], grads)


def build_space(mesh, kind):
    return FeSpace(mesh, kind)


def _scatter(space_rows, space_cols, local):
    """Assemble per-cell blocks (ncells, nr, nc) into a global CSR matrix."""
    rows = np.repeat(space_rows.cell_dofs[:, :, None], space_cols.nloc, axis=2)
    cols = np.repeat(space_cols.cell_dofs[:, None, :], space_rows.nloc, axis=1)
    mat = sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(space_rows.ndof, space_cols.ndof),
    )
    out = mat.tocsr()
    out.sum_duplicates()
    out.sort_indices()
    return out


def assemble_stiffness(space, coefficient=None, quad=None):
    """Stiffness matrix of (c grad u, grad v); c is cellwise or quad-valued.

    ``coefficient`` may be None, an array of per-cell values, or an
    (ncells, nq) array of values at the quadrature points.
    """
    if not space.conforming:
        raise FeSpaceError("stiffness needs an H1-conforming space")
    quad = quad or triangle_quadrature(4 if space.kind == "p1b" else 2)
    grads = space.phys_grads(quad)
    _, det = space.geometry()
    w = quad.weights[None, :] * det[:, None]
    if coefficient is not None:
        c = np.asarray(coefficient, dtype=float)
        w = w * (c[:, None] if c.ndim == 1 else c)
    local = np.einsum("cq,ciqx,cjqx->cij", w, grads, grads)
    return _scatter(space, space, local)


def assemble_mass(space, quad=None, weight_at_quad=None):
    """Mass matrix of (w u, v) on a single space."""
    quad = quad or triangle_quadrature(4 if space.kind == "p1b" else 2)
    return assemble_coupling(space, space, quad=quad, weight_at_quad=weight_at_quad)


def assemble_coupling(space_v, space_w, quad=None, weight_at_quad=None):
    """Rectangular coupling matrix B with B[i, j] = (phi_j, v_i).

    Rows belong to ``space_v`` and columns to ``space_w``; both live on the
    same mesh.  Exact for the polynomial degrees involved with the default
    degree-4 rule.
    """
    if space_v.mesh is not space_w.mesh:
        raise FeSpaceError("coupled spaces must share one mesh")
    quad = quad or triangle_quadrature(4)
    bv = space_v.basis(quad.points)
    bw = space_w.basis(quad.points)
    _, det = space_v.geometry()
    w = quad.weights[None, :] * det[:, None]
    if weight_at_quad is not None:
        w = w * np.asarray(weight_at_quad, dtype=float)
    local = np.einsum("cq,iq,jq->cij", w, bv, bw)
    return _scatter(space_v, space_w, local)


def lumped_mass_diagonal(space):
    """Vertex-rule lumped mass: entry |T|/3 accumulated per incident cell."""
    if space.kind != "p1":
        raise FeSpaceError("mass lumping is defined for p1 spaces")
    areas = space.mesh.cell_areas()
    diag = np.zeros(space.ndof)
    np.add.at(diag, space.cell_dofs, (areas / 3.0)[:, None])
    return diag


def assemble_weighted_mass_w(space_w, weight):
    """Diagonal latent-block operator with strictly positive dof weights.

    For "p0" the diagonal holds weight_T * |T|; for "p1" it holds the
    nodal weight times the lumped mass.  Nonpositive weights are rejected
    (they signal a misconfigured regularization).
    """
    weight = np.asarray(weight, dtype=float) * np.ones(space_w.ndof)
    if np.any(weight <= 0.0):
        raise FeSpaceError("weighted mass requires strictly positive weights")
    if space_w.kind == "p0":
        return weight * space_w.mesh.cell_areas()
    if space_w.kind == "p1":
        return weight * lumped_mass_diagonal(space_w)
    raise FeSpaceError("weighted diagonal mass needs a p0 or lumped p1 space")


def assemble_load(space, fn, degree=6):
    """Moment vector (f, v_i) of a callable against all basis functions."""
    quad = triangle_quadrature(degree)
    xy = space.quad_points_xy(quad)
    _, det = space.geometry()
    w = quad.weights[None, :] * det[:, None]
    fv = np.asarray(fn(xy[:, :, 0], xy[:, :, 1]), dtype=float) * np.ones(xy.shape[:2])
    basis = space.basis(quad.points)
    local = np.einsum("cq,iq->ci", w * fv, basis)
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs, local)
    return out


def assemble_moment(space, values_at_quad, quad):
    """Moment vector (w, v_i) of values given at the quadrature points."""
    _, det = space.geometry()
    w = quad.weights[None, :] * det[:, None] * np.asarray(values_at_quad, dtype=float)
    basis = space.basis(quad.points)
    local = np.einsum("cq,iq->ci", w, basis)
    out = np.zeros(space.ndof)
    np.add.at(out, space.cell_dofs, local)
    return out


def assemble_advection(space, beta, quad=None):
    """Advection matrix of (beta . grad u, v) for a constant velocity beta."""
    if not space.conforming:
        raise FeSpaceError("advection needs an H1-conforming space")
    quad = quad or triangle_quadrature(4 if space.kind == "p1b" else 2)
    grads = space.phys_grads(quad)
    basis = space.basis(quad.points)
    _, det = space.geometry()
    w = quad.weights[None, :] * det[:, None]
    bgrad = np.einsum("x,cjqx->cjq", np.asarray(beta, dtype=float), grads)
    local = np.einsum("cq,iq,cjq->cij", w, basis, bgrad)
    return _scatter(space, space, local)


def integrate(mesh, fn, degree=6):
    """Quadrature of a callable fn(x, y) over the mesh."""
    quad = triangle_quadrature(degree)
    space = FeSpace(mesh, "p1")
    xy = space.quad_points_xy(quad)
    _, det = space.geometry()
    vals = fn(xy[:, :, 0], xy[:, :, 1])
    return float(np.einsum("q,cq,c->", quad.weights, np.asarray(vals, dtype=float) * np.ones(xy.shape[:2]), det))


def compute_error_norms(coefs, exact, space, exact_grad=None, degree=6):
    """L2, H1-seminorm, and sampled Linf errors of a field vs a callable.

    ``exact_grad(x, y)`` must return a pair of arrays when the H1 seminorm
    is requested; otherwise that entry is None.  Linf is sampled at the
    quadrature points and mesh vertices.
    """
    quad = triangle_quadrature(degree)
    xy = space.quad_points_xy(quad)
    _, det = space.geometry()
    w = quad.weights[None, :] * det[:, None]
    uh = space.eval_at_quad(coefs, quad)
    ue = np.asarray(exact(xy[:, :, 0], xy[:, :, 1]), dtype=float) * np.ones_like(uh)
    diff = uh - ue
    l2 = float(np.sqrt(np.sum(w * diff**2)))
    linf = float(np.max(np.abs(diff)))
    if space.kind != "p0":
        v = space.mesh.vertices
        uv = coefs[: v.shape[0]]
        linf = max(linf, float(np.max(np.abs(uv - np.asarray(exact(v[:, 0], v[:, 1])) * np.ones(v.shape[0])))))
    h1 = None
    if exact_grad is not None:
        gh = space.grad_at_quad(coefs, quad)
        gx, gy = exact_grad(xy[:, :, 0], xy[:, :, 1])
        gdiff = gh - np.stack([gx * np.ones_like(uh), gy * np.ones_like(uh)], axis=2)
        h1 = float(np.sqrt(np.sum(w * np.sum(gdiff**2, axis=2))))
    return {"L2": l2, "H1_semi": h1, "Linf_sampled": linf}
