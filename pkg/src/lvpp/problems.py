# -*- coding: utf-8 -*-
"""
Benchmark problem definitions: manufactured obstacle problems with exact
solutions, the Eriksson-Johnson advection-diffusion solution, and the
cantilever compliance-minimization model (elasticity, screened density
filter, cubic stiffness interpolation, gradient, mirror-descent driver).
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import linalg, solver
from .entropy import FermiDirac, lnit, sigmoid
from .fespace import (
    FeSpace,
    assemble_coupling,
    assemble_mass,
    assemble_moment,
    assemble_stiffness,
    triangle_quadrature,
)
from .mesh import cantilever_mesh


class ProblemError(ValueError):
    pass


def _zeros(x, y):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass
class ObstacleProblem:
    """Data functions of an obstacle benchmark; exact fields are optional."""

    name: str
    f: callable
    obstacle: callable
    g: callable
    exact: callable = None
    exact_grad: callable = None
    exact_multiplier: callable = None


def biactive_problem():
    """Smooth solution vanishing with its multiplier on the half-plane x < 0."""

    def exact(x, y):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, x**4)

    def exact_grad(x, y):
        x = np.asarray(x, dtype=float)
        gx = np.where(x < 0, 0.0, 4.0 * x**3)
        return gx, np.zeros_like(gx)

    def f(x, y):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, -12.0 * x**2)

    return ObstacleProblem(
        "biactive", f, _zeros, exact, exact, exact_grad, exact_multiplier=_zeros
    )


def strict_complementarity_problem():
    """Sinusoidal load with an active set carrying a nonzero multiplier."""

    def f(x, y):
        return 2.0 * np.pi**2 * np.sin(np.pi * np.asarray(x)) * np.sin(np.pi * np.asarray(y))

    return ObstacleProblem("strict_complementarity", f, _zeros, _zeros)


def nonsmooth_multiplier_problem():
    """Biactive solution whose multiplier jumps on the ring r^2 = 3/4."""

    def exact(x, y):
        s = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
        return np.where(s < 0.25, (1.0 - 4.0 * s) ** 4, 0.0)

    def exact_grad(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = x**2 + y**2
        fac = np.where(s < 0.25, -32.0 * (1.0 - 4.0 * s) ** 3, 0.0)
        return fac * x, fac * y

    def exact_multiplier(x, y):
        s = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
        return np.where(s > 0.75, 1.0, 0.0)

    def f(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = x**2 + y**2
        lap = np.where(
            s < 0.25,
            -64.0 * (1.0 - 4.0 * s) ** 3 + 768.0 * s * (1.0 - 4.0 * s) ** 2,
            0.0,
        )
        return -lap - exact_multiplier(x, y)

    return ObstacleProblem(
        "nonsmooth_multiplier", f, _zeros, exact, exact, exact_grad, exact_multiplier
    )


def lambert_w_branch(z, branch=0):
    """Real Lambert W on branch 0 or -1, by Halley iteration.

    The seed uses the square-root expansion near the branch point -1/e and
    the log-log asymptote elsewhere; converges to |w e^w - z| <= 1e-13.
    """
    z = float(z)
    if branch not in (0, -1):
        raise ProblemError("only branches 0 and -1 are real")
    if branch == -1 and not (-1.0 / math.e <= z < 0.0):
        raise ProblemError("branch -1 needs -1/e <= z < 0")
    if branch == 0 and z < -1.0 / math.e:
        raise ProblemError("branch 0 needs z >= -1/e")
    if z == 0.0:
        return 0.0
    p2 = 2.0 * (math.e * z + 1.0)
    if p2 <= 0.0:
        return -1.0  # branch point z = -1/e
    if branch == 0:
        if abs(z) < 0.3:
            w = z * (1.0 - z)
        elif z < 1.5:
            p = math.sqrt(p2)
            w = -1.0 + p - p * p / 3.0
        else:
            lz = math.log(z)
            w = lz - math.log(lz)
    else:
        if z > -0.1:
            lz = math.log(-z)
            w = lz - math.log(-lz)
        else:
            p = -math.sqrt(p2)
            w = -1.0 + p - p * p / 3.0
    for _ in range(100):
        ew = math.exp(w)
        r = w * ew - z
        if abs(r) <= 1e-13 * max(1.0, abs(z)):
            return w
        denom = ew * (w + 1.0) - (w + 2.0) * r / (2.0 * w + 2.0)
        w -= r / denom
    raise ProblemError(f"Lambert W iteration stalled at z={z}")


def spherical_obstacle_constants():
    """Contact radius and log coefficient of the spherical benchmark."""
    a = math.exp(lambert_w_branch(-1.0 / (2.0 * math.e**2), -1) / 2.0 + 1.0)
    A = math.sqrt(0.25 - a * a) / math.log(a)
    return a, A


def spherical_obstacle_problem(extension_slope=1.0):
    """Hemispherical obstacle on the unit disk with zero load and data.

    Outside r = 1/2 the obstacle continues linearly downward with the
    given slope; the exact solution stays positive there, so no contact
    occurs for any slope > 0.
    """
    a, A = spherical_obstacle_constants()

    def obstacle(x, y):
        r = np.sqrt(np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)
        inside = r <= 0.5
        cap = np.sqrt(np.maximum(0.25 - np.minimum(r, 0.5) ** 2, 0.0))
        return np.where(inside, cap, -extension_slope * (r - 0.5))

    def exact(x, y):
        r = np.sqrt(np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)
        r = np.maximum(r, 1e-300)
        return np.where(r > a, A * np.log(r), np.sqrt(np.maximum(0.25 - r**2, 0.0)))

    def exact_grad(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r2 = np.maximum(x**2 + y**2, 1e-300)
        r = np.sqrt(r2)
        outer = A / r2  # d/dx A ln r = A x / r^2
        cap = -1.0 / np.sqrt(np.maximum(0.25 - r2, 1e-300))
        gx = np.where(r > a, outer * x, cap * x)
        gy = np.where(r > a, outer * y, cap * y)
        return gx, gy

    prob = ObstacleProblem("spherical_obstacle", _zeros, obstacle, _zeros, exact, exact_grad)
    prob.contact_radius = a
    prob.log_coefficient = A
    return prob


def eriksson_johnson_exact(x, y, eps, modes=(1.0,)):
    """Boundary-layer solution of the constant-advection model problem.

    ``modes`` holds the cosine amplitudes C_n starting at n = 1; the
    benchmark uses a single unit first mode.  Vanishes identically on the
    outflow x = 1 and has zero normal derivative at y = 0 and y = 1.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for n, cn in enumerate(modes, start=1):
        if cn == 0.0:
            continue
        lam = n**2 * math.pi**2 * eps
        root = math.sqrt(1.0 + 4.0 * eps * lam)
        r1 = (1.0 + root) / (2.0 * eps)
        r2 = (1.0 - root) / (2.0 * eps)
        denom = r1 * math.exp(-r2) - r2 * math.exp(-r1)
        out = out + cn * (np.exp(r2 * (x - 1.0)) - np.exp(r1 * (x - 1.0))) / denom * np.cos(
            n * math.pi * y
        )
    return out


def eriksson_johnson_problem(eps, modes=(1.0,)):
    """Advection-diffusion data for beta = (1, 0), f = 0 on the unit square."""

    def g(x, y):
        return eriksson_johnson_exact(x, y, eps, modes)

    return {"eps_diff": eps, "beta": (1.0, 0.0), "f": _zeros, "g": g, "exact": g}


# ---------------------------------------------------------------------------
# topology optimization


def simp(rho_tilde, rho_min=1e-6):
    """Cubic stiffness interpolation rho_min + rho~^3 (1 - rho_min)."""
    return rho_min + np.asarray(rho_tilde, dtype=float) ** 3 * (1.0 - rho_min)


def simp_derivative(rho_tilde, rho_min=1e-6):
    return 3.0 * np.asarray(rho_tilde, dtype=float) ** 2 * (1.0 - rho_min)


@dataclass
class TopOptProblem:
    """Cantilever compliance minimization on (0,3)x(0,1).

    The left edge is clamped; a downward traction of magnitude
    ``load_traction`` acts on the right edge over ``load_span``.  The
    default magnitude is calibrated so the reference step rule
    alpha_k = 25 k starts with a normalized increment near 2e-2 and the
    optimized compliance lands near 4e-3.
    """

    nx: int = 96
    ny: int = 32
    lam: float = 1.0
    mu: float = 1.0
    rho_min: float = 1e-6
    volume_fraction: float = 0.5
    filter_radius: float = 0.02
    load_span: tuple = (0.45, 0.55)
    load_traction: float = 0.072

    def build_mesh(self):
        return cantilever_mesh(self.nx, self.ny, self.load_span)


class TopOptDiscretization:
    """Operators for the density-filter compliance pipeline on one mesh.

    Displacements, filtered densities, and gradients are continuous P1
    fields; the latent design variable is a broken constant per cell.
    """

    def __init__(self, problem):
        self.problem = problem
        self.mesh = problem.build_mesh()
        self.space = FeSpace(self.mesh, "p1")
        self.space_w = FeSpace(self.mesh, "p0")
        self.areas = self.mesh.cell_areas()
        self.volume = float(self.areas.sum())
        self.quad = triangle_quadrature(4)

        K1 = assemble_stiffness(self.space)
        M1 = assemble_mass(self.space, quad=self.quad)
        self.B_w = assemble_coupling(self.space, self.space_w, quad=self.quad)
        self.filter_op = (problem.filter_radius**2 * K1 + M1).tocsc()
        self._filter_lu = sparse.linalg.splu(self.filter_op)
        self.M1 = M1

        # vector P1 elasticity: dofs (2*vertex, 2*vertex+1)
        self.n_udof = 2 * self.mesh.num_vertices
        self._elastic_setup()
        self.load = self._traction_vector()
        fixed_v = self.mesh.boundary_vertices("fixed")
        self.fixed_u = np.sort(np.concatenate([2 * fixed_v, 2 * fixed_v + 1]))
        self.free_u = np.setdiff1d(np.arange(self.n_udof), self.fixed_u)

    def _elastic_setup(self):
        # constant per-cell strain-displacement data for P1 displacements
        inv_t, det = self.space.geometry()
        dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grads = np.einsum("cxy,ly->clx", inv_t, dlam)  # (ncells, 3, 2)
        self._grads = grads
        self._det = det
        cells = self.mesh.cells
        dofs = np.empty((self.mesh.num_cells, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * cells
        dofs[:, 1::2] = 2 * cells + 1
        self._udofs = dofs

    def _element_elastic(self):
        """Unit-coefficient 6x6 element matrices of the isotropic form."""
        lam, mu = self.problem.lam, self.problem.mu
        nc = self.mesh.num_cells
        Bmat = np.zeros((nc, 3, 6))  # rows: e_xx, e_yy, 2 e_xy
        g = self._grads
        Bmat[:, 0, 0::2] = g[:, :, 0]
        Bmat[:, 1, 1::2] = g[:, :, 1]
        Bmat[:, 2, 0::2] = g[:, :, 1]
        Bmat[:, 2, 1::2] = g[:, :, 0]
        D = np.array(
            [
                [lam + 2.0 * mu, lam, 0.0],
                [lam, lam + 2.0 * mu, 0.0],
                [0.0, 0.0, mu],
            ]
        )
        return np.einsum("cki,kl,clj->cij", Bmat, D, Bmat), Bmat

    def elastic_matrix(self, coeff_at_quad):
        """Global stiffness with the cellwise-quadrature SIMP coefficient."""
        elem, _ = self._elastic_unit()
        w = np.einsum("q,cq->c", self.quad.weights, coeff_at_quad) * self._det
        local = elem * w[:, None, None]
        rows = np.repeat(self._udofs[:, :, None], 6, axis=2)
        cols = np.repeat(self._udofs[:, None, :], 6, axis=1)
        K = sparse.coo_matrix(
            (local.ravel(), (rows.ravel(), cols.ravel())),
            shape=(self.n_udof, self.n_udof),
        ).tocsr()
        return K

    def _elastic_unit(self):
        if not hasattr(self, "_elem_cache"):
            self._elem_cache = self._element_elastic()
        return self._elem_cache

    def _traction_vector(self):
        """Consistent load of the configured downward traction on the span."""
        lo, hi = self.problem.load_span
        f = np.zeros(self.n_udof)
        for (a, b), tag in zip(self.mesh.boundary_edges, self.mesh.boundary_tags):
            if tag != "load":
                continue
            ya, yb = self.mesh.vertices[a, 1], self.mesh.vertices[b, 1]
            y0, y1 = min(ya, yb), max(ya, yb)
            c0, c1 = max(y0, lo), min(y1, hi)
            if c1 <= c0:
                continue
            length = y1 - y0
            # integrate the two linear hats over the clipped interval
            mid = 0.5 * (c0 + c1)
            seg = c1 - c0
            w_a = seg * (y1 - mid) / length if yb >= ya else seg * (mid - y0) / length
            w_b = seg - w_a
            f[2 * a + 1] -= self.problem.load_traction * w_a
            f[2 * b + 1] -= self.problem.load_traction * w_b
        return f

    def filter_density(self, rho_cell):
        """Screened-Poisson filter: returns the nodal filtered density."""
        return self._filter_lu.solve(self.B_w @ rho_cell)

    def displacement(self, rho_tilde_nodal):
        """Elasticity solve with the filtered density; returns (u, K)."""
        rt = self.space.eval_at_quad(rho_tilde_nodal, self.quad)
        K = self.elastic_matrix(simp(rt, self.problem.rho_min))
        free = self.free_u
        Kff = K[free][:, free].tocsc()
        u = np.zeros(self.n_udof)
        u[free] = linalg.solve_spd(Kff, self.load[free])
        return u, K

    def compliance(self, u):
        return float(self.load @ u)

    def strain_energy_density(self, u, rho_tilde_nodal):
        """Cellwise sigma(u):eps(u) (constant for P1 displacements)."""
        _, Bmat = self._elastic_unit()
        ue = u[self._udofs]
        strain = np.einsum("ckl,cl->ck", Bmat, ue)  # (e_xx, e_yy, 2e_xy)
        lam, mu = self.problem.lam, self.problem.mu
        tr = strain[:, 0] + strain[:, 1]
        return (
            lam * tr**2
            + 2.0 * mu * (strain[:, 0] ** 2 + strain[:, 1] ** 2)
            + mu * strain[:, 2] ** 2
        )

    def compliance_gradient(self, rho_cell):
        """Filtered gradient of compliance as a nodal field.

        Returns (gradient_nodal, compliance, displacement, rho_tilde).
        The chain rule through the filter reuses the same screened
        operator because it is self-adjoint.
        """
        rho_tilde = self.filter_density(rho_cell)
        u, _ = self.displacement(rho_tilde)
        rt = self.space.eval_at_quad(rho_tilde, self.quad)
        energy = self.strain_energy_density(u, rho_tilde)  # per cell, constant
        src = -simp_derivative(rt, self.problem.rho_min) * energy[:, None]
        rhs = assemble_moment(self.space, src, self.quad)
        w_tilde = self._filter_lu.solve(rhs)
        return w_tilde, self.compliance(u), u, rho_tilde

    def gradient_cellwise(self, w_tilde_nodal):
        """Latent-space restriction of the nodal gradient (centroid values)."""
        return w_tilde_nodal[self.mesh.cells].mean(axis=1)


def _as_disc(disc_or_problem):
    if isinstance(disc_or_problem, TopOptProblem):
        return TopOptDiscretization(disc_or_problem)
    return disc_or_problem


def helmholtz_filter(disc_or_problem, rho_cell):
    """Screened-Poisson density filter; returns the nodal filtered field."""
    return _as_disc(disc_or_problem).filter_density(np.asarray(rho_cell, dtype=float))


def elasticity_solve(disc_or_problem, rho_tilde_nodal):
    """Displacement under the configured load; returns (u, compliance)."""
    disc = _as_disc(disc_or_problem)
    u, _ = disc.displacement(np.asarray(rho_tilde_nodal, dtype=float))
    return u, disc.compliance(u)


def compliance_gradient(disc_or_problem, rho_cell):
    """Filtered compliance gradient of a cellwise density; nodal field."""
    disc = _as_disc(disc_or_problem)
    w_tilde, _, _, _ = disc.compliance_gradient(np.asarray(rho_cell, dtype=float))
    return w_tilde


def topopt_solve(problem, alpha_rule=lambda k: 25.0 * k, itol=1e-2, ntol=1e-5,
                 max_it=500, callback=None):
    """Entropic mirror descent on the latent design field.

    Runs half-step descent with the compliance gradient, projecting every
    iterate back onto the volume constraint by a constant latent shift.
    Returns (history, discretization); history rows carry the per-step
    normalized increment eta_k, compliance, and volume.
    """
    disc = TopOptDiscretization(problem)
    theta = problem.volume_fraction
    kind = FermiDirac(0.0, 1.0)
    target = theta * disc.volume
    psi = np.full(disc.space_w.ndof, float(lnit(theta)))
    rho = sigmoid(psi)
    history = []
    for k in range(1, max_it + 1):
        alpha = float(alpha_rule(k))
        w_tilde, compliance, u, rho_tilde = disc.compliance_gradient(rho)
        grad_w = disc.gradient_cellwise(w_tilde)
        psi_half = psi - alpha * grad_w
        c = solver.feasibility_correction(psi_half, kind, disc.areas, target)
        psi_new = psi_half + c
        rho_new = sigmoid(psi_new)
        inc = float(disc.areas @ np.abs(rho_new - rho))
        eta = inc / alpha
        volume = float(disc.areas @ rho_new)
        row = {
            "k": k,
            "alpha": alpha,
            "eta": eta,
            "compliance": compliance,
            "volume": volume,
            "correction": c,
        }
        history.append(row)
        if callback is not None:
            callback(row, rho_new, disc)
        psi, rho = psi_new, rho_new
        if inc <= min(alpha * ntol, itol):
            break
    else:
        raise solver.NonConvergenceError(f"mirror descent did not stop in {max_it} steps")
    return history, disc, psi
