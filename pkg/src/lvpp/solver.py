# -*- coding: utf-8 -*-
"""
Latent-variable proximal solvers.

The obstacle solver runs the outer proximal loop with a quasi-Newton inner
loop on each saddle-point subproblem; the same machinery yields the
single-solve entropic Poisson equation (step size 1/theta).  A linearized
proximal loop handles advection-diffusion with two-sided bounds, and a
half-step mirror-descent driver covers gradient-only problems with an
optional linear equality constraint.
"""
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse as _sp

from . import linalg
from .entropy import safe_exp, sigmoid, lnit
from .fespace import (
    FeSpace,
    assemble_advection,
    assemble_coupling,
    assemble_load,
    assemble_mass,
    assemble_moment,
    assemble_stiffness,
    assemble_weighted_mass_w,
    lumped_mass_diagonal,
    triangle_quadrature,
)


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, residual=None, iteration=None):
        super().__init__(message)
        self.residual = residual
        self.iteration = iteration


def _damped_latent_update(psi, delta, eps):
    """Additive latent update with safeguards on both tails.

    Rising side (delta > 1): exp overflows long before the linearization
    is meaningful, so the update maps the linearized primal target
    exp(psi)(1 + delta) + eps*delta back through the log; where the
    regularization dominates that target (deep cells, the target is
    noise) the rise is limited to 1 + ln(delta) instead.  Falling side:
    additive, but each step may at most double the current depth (plus a
    margin), which tracks multiplier growth geometrically while blocking
    single-step runaways from transient negative cell averages.  Fixed
    points (delta = 0) are unaffected.
    """
    delta = np.asarray(delta, dtype=float)
    out = psi + delta
    big = delta > 1.0
    if np.any(big):
        e = safe_exp(psi[big])
        target = np.maximum(e * (1.0 + delta[big]) + eps * delta[big], 1e-300)
        out[big] = np.minimum(np.log(target), psi[big] + 1.0 + np.log(delta[big]))
    floor = psi - (np.abs(psi) + 50.0)
    return np.maximum(out, floor)


def _damped_sigmoid_update(psi, delta, dinv, eps_reg, move_cap=20.0):
    """Latent update consistent with the linearized primal change.

    The linearized coupling prescribes the primal move
    sigmoid(psi) + (sigmoid'(psi) + eps) * delta; mapping that target back
    through lnit keeps the iterate out of the saturated tails where the
    additive update overshoots by many orders of magnitude.  Where the
    target leaves (0, 1) entirely the logit is clipped, so the latent move
    itself is capped to keep successive linearizations overlapping.
    Fixed points (delta = 0) are unaffected.
    """
    target = sigmoid(psi) + (dinv + eps_reg) * np.asarray(delta, dtype=float)
    tiny = 1e-300
    proposed = lnit(np.clip(target, tiny, 1.0 - 1e-16))
    return psi + np.clip(proposed - psi, -move_cap, move_cap)


@dataclass
class IterationRow:
    k: int
    alpha: float
    inc_h1: float
    inc_l2: float
    newton_its: int
    lin_solves: int  # cumulative
    energy: float


@dataclass
class SolveReport:
    """Per-iteration progress plus the final coefficient fields.

    ``meta`` holds scalar run parameters that are echoed into the CSV
    header; ``aux`` keeps non-serializable companions (discretization,
    comparison fields).
    """

    rows: list = field(default_factory=list)
    u: np.ndarray = None
    psi: np.ndarray = None
    lam: np.ndarray = None
    errors: dict = field(default_factory=dict)
    kkt: dict = field(default_factory=dict)
    wall_time: float = 0.0
    meta: dict = field(default_factory=dict)
    aux: dict = field(default_factory=dict)

    @property
    def lin_solves(self):
        return self.rows[-1].lin_solves if self.rows else 0

    @property
    def iterations(self):
        return len(self.rows)

    def increments(self, which="inc_h1"):
        return [getattr(r, which) for r in self.rows]

    def write_csv(self, path, metadata=None):
        meta = dict(self.meta)
        meta.update(metadata or {})
        with open(path, "w") as fh:
            for key in sorted(meta):
                val = meta[key]
                if isinstance(val, (int, float, str, bool)):
                    fh.write(f"# {key} = {val}\n")
            fh.write("k,alpha,inc_h1,inc_l2,newton_its,lin_solves,energy\n")
            for r in self.rows:
                fh.write(
                    f"{r.k},{r.alpha:.6g},{r.inc_h1:.6g},{r.inc_l2:.6g},"
                    f"{r.newton_its},{r.lin_solves},{r.energy:.6g}\n"
                )


class ObstacleDiscretization:
    """Assembled operators for one obstacle-type solve on a fixed mesh.

    The primal space is bubble-enriched P1 paired with broken constants
    for the latent variable.  Stiffness, coupling, load, and obstacle
    moments are assembled once and reused by every linearized solve.
    """

    def __init__(self, mesh, f, obstacle, g, dirichlet_tags=None, quad_degree=6):
        self.mesh = mesh
        self.space_v = FeSpace(mesh, "p1b")
        self.space_w = FeSpace(mesh, "p0")
        self.K = assemble_stiffness(self.space_v)
        self.M = assemble_mass(self.space_v)
        self.B = assemble_coupling(self.space_v, self.space_w)
        self.areas = mesh.cell_areas()
        self.F = assemble_load(self.space_v, f, degree=quad_degree)
        self.obstacle = obstacle
        self.Phi_W = assemble_load(self.space_w, obstacle, degree=quad_degree)
        self.quad = triangle_quadrature(quad_degree)
        xy = self.space_v.quad_points_xy(self.quad)
        self.phi_at_quad = np.asarray(obstacle(xy[:, :, 0], xy[:, :, 1]), dtype=float) * np.ones(
            xy.shape[:2]
        )

        self.f_sup = float(np.max(np.abs(np.asarray(f(xy[:, :, 0], xy[:, :, 1]), dtype=float))))
        fixed = self.space_v.boundary_dofs(dirichlet_tags)
        self.fixed = fixed
        self.free = np.setdiff1d(np.arange(self.space_v.ndof), fixed)
        verts = mesh.vertices
        self.g_fixed = np.asarray(g(verts[fixed, 0], verts[fixed, 1]), dtype=float) * np.ones(
            len(fixed)
        )
        K = self.K.tocsr()
        self.K_ff = K[self.free][:, self.free].tocsc()
        self.K_fd = K[self.free][:, fixed]
        B = self.B.tocsr()
        self.B_f = B[self.free]
        self.B_d = B[fixed]

    def compose(self, u_free):
        u = np.zeros(self.space_v.ndof)
        u[self.free] = u_free
        u[self.fixed] = self.g_fixed
        return u

    def norm_l2(self, w):
        return float(np.sqrt(max(w @ (self.M @ w), 0.0)))

    def norm_h1(self, w):
        return float(np.sqrt(max(w @ (self.M @ w) + w @ (self.K @ w), 0.0)))

    def energy(self, u):
        return float(0.5 * u @ (self.K @ u) - self.F @ u)

    def primal_image(self, psi):
        """Pointwise feasible field phi + exp(psi) at the quadrature points."""
        return self.phi_at_quad + safe_exp(psi)[:, None]


def newton_subproblem(disc, psi_prior, alpha, tol_newton, eps=1e-6, max_it=100,
                      counter=None, u_init=None, psi_init=None, deg_floor=1e-30):
    """Solve one discrete saddle-point subproblem by quasi-Newton steps.

    Each step solves the linearized system with the regularized latent
    block and applies the (damped) additive update to psi.  Cells whose
    exponential has collapsed below ``deg_floor`` are kept as exact
    constraints on the cell average, with the latent value recovered from
    the first equation; this is where the multiplier lives once the step
    sizes outgrow the regularized coupling.  Stops when the L2 distance
    between consecutive primal iterates drops below ``tol_newton``.
    """
    psi = np.array(psi_init if psi_init is not None else psi_prior, dtype=float)
    u = np.array(u_init, dtype=float) if u_init is not None else np.zeros(disc.space_v.ndof)
    prior_moment = disc.B @ psi_prior
    nf = len(disc.free)
    # constraint treatment is needed once the step size outgrows the
    # enforcement scale |T|/eps of the regularized latent block
    alpha_split = float(np.min(disc.areas)) / (3.0 * eps)
    res_prev = np.inf
    for it in range(1, max_it + 1):
        w_prev = u
        e = safe_exp(psi)
        deg = (e < deg_floor) if alpha > alpha_split else np.zeros_like(e, dtype=bool)
        rhs_v_full = alpha * disc.F + prior_moment - disc.B @ np.where(deg, 0.0, psi)
        rhs_v = rhs_v_full[disc.free] - alpha * (disc.K_fd @ disc.g_fixed)
        rhs_w = disc.Phi_W + e * disc.areas - disc.B_d.T @ disc.g_fixed
        if not np.any(deg):
            C = assemble_weighted_mass_w(disc.space_w, e + eps)
            system = linalg.SaddleSystem(
                A=alpha * disc.K_ff, B=disc.B_f, C=C, rhs_V=rhs_v, rhs_W=rhs_w
            )
            u_free, delta = linalg.condense_and_solve(system, counter=counter)
            psi_new = _damped_latent_update(psi, delta, eps)
        else:
            act = np.flatnonzero(deg)
            ina = np.flatnonzero(~deg)
            B_f = disc.B_f.tocsc()
            B_act, B_ina = B_f[:, act], B_f[:, ina]
            C_ina = (e[ina] + eps) * disc.areas[ina]
            # scale rows by 1/alpha and solve for psi_act/alpha (the
            # multiplier scale), which keeps the block well conditioned
            # for arbitrarily large step sizes
            A_schur = disc.K_ff + (B_ina.multiply(1.0 / (alpha * C_ina[None, :]))) @ B_ina.T
            block = _sp.vstack(
                [
                    _sp.hstack([A_schur, B_act]),
                    _sp.hstack([B_act.T, _sp.csr_matrix((len(act), len(act)))]),
                ]
            ).tocsc()
            rhs_top = (rhs_v + B_ina @ (rhs_w[ina] / C_ina)) / alpha
            sol = linalg.solve_sparse(block, np.concatenate([rhs_top, rhs_w[act]]))
            if counter is not None:
                counter.tick()
            u_free = sol[:nf]
            psi_act = alpha * sol[nf:]
            delta_ina = (B_ina.T @ u_free - rhs_w[ina]) / C_ina
            psi_new = psi.copy()
            psi_new[ina] = _damped_latent_update(psi[ina], delta_ina, eps)
            # constrained cells whose recovered value says "not active", or
            # whose move is out of scale with any admissible multiplier,
            # rejoin the exponential branch at their cell average; cells
            # without positive mass park at the branch boundary instead
            # (rejoining at a vanishing average only thrashes the split)
            u_full = disc.compose(u_free)
            avg_u = (disc.B.T @ u_full - disc.Phi_W) / disc.areas
            ln_deg = np.log(deg_floor)
            admissible = alpha * (2.0 * disc.f_sup + 10.0) + 100.0
            wants_out = (psi_act > ln_deg) | (np.abs(psi_act - psi_prior[act]) > admissible)
            can_rejoin = avg_u[act] > deg_floor
            psi_new[act] = np.where(
                wants_out & can_rejoin,
                np.log(np.maximum(avg_u[act], deg_floor)),
                np.where(wants_out, psi[act], psi_act),
            )
        u = disc.compose(u_free)
        latent_move = float(np.max(np.abs(psi_new - psi)))
        psi = psi_new
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(psi)):
            raise NonConvergenceError("Newton iterate is not finite", iteration=it)
        res = disc.norm_l2(u - w_prev)
        if res <= tol_newton:
            return u, psi, it
        # accept a rounding plateau: steps near the tolerance that have
        # stopped contracting (with a quiet latent field) cannot be
        # improved by further iterations
        if res <= 100.0 * tol_newton and res >= 0.9 * res_prev and latent_move <= 1e-3 * (
            1.0 + float(np.max(np.abs(psi)))
        ):
            return u, psi, it
        res_prev = res
    raise NonConvergenceError(
        f"Newton not converged in {max_it} iterations (last step {res:.3e})",
        residual=res,
        iteration=max_it,
    )


def lvpp_obstacle(problem, mesh, schedule, tol_exit=1e-6, eps=1e-6, psi0=None,
                  max_outer=200, max_newton=100, dirichlet_tags=None,
                  check_feasible=True, newton_tol_max=None):
    """Outer proximal loop for the obstacle problem.

    Starts from zero primal/latent coefficients (or ``psi0``), solves a
    saddle-point subproblem per step size, and feeds each L2 increment
    back in as the next inner tolerance.  ``newton_tol_max`` optionally
    caps that coupled tolerance so every subproblem is solved at least
    this accurately (used by the optimality-condition studies).  Returns
    a SolveReport carrying the final primal, latent, and multiplier
    fields.
    """
    t0 = time.perf_counter()
    disc = ObstacleDiscretization(
        mesh, problem.f, problem.obstacle, problem.g, dirichlet_tags=dirichlet_tags
    )
    psi = np.array(psi0, dtype=float) if psi0 is not None else np.zeros(disc.space_w.ndof)
    u = np.zeros(disc.space_v.ndof)
    lam = np.zeros(disc.space_w.ndof)
    counter = linalg.SolveCounter()
    report = SolveReport(meta={"tol_exit": tol_exit, "eps": eps, "ndof_v": disc.space_v.ndof})
    tol_newton = 1e-2 * mesh.diameter()
    for k in range(1, max_outer + 1):
        alpha = schedule.next_alpha()
        u_prev, psi_prev = u, psi
        tol_inner = tol_newton if newton_tol_max is None else min(tol_newton, newton_tol_max)
        try:
            u, psi, its = newton_subproblem(
                disc, psi_prev, alpha, tol_inner, eps=eps, max_it=max_newton,
                counter=counter, u_init=u_prev, psi_init=psi_prev,
            )
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                f"outer iteration {k} (alpha={alpha:.3g}): {exc}",
                residual=exc.residual, iteration=k,
            ) from exc
        if check_feasible:
            # exp(psi) > 0 after clamping, so the image sits strictly above
            # the obstacle up to representable resolution (phi + tiny == phi)
            image = disc.primal_image(psi)
            if not (np.all(safe_exp(psi) > 0.0) and np.all(image >= disc.phi_at_quad)):
                raise SolverError("latent image lost feasibility")
        lam = (psi_prev - psi) / alpha
        diff = u - u_prev
        inc_l2 = disc.norm_l2(diff)
        report.rows.append(
            IterationRow(k, alpha, disc.norm_h1(diff), inc_l2, its, counter.count, disc.energy(u))
        )
        tol_newton = inc_l2
        if tol_newton < tol_exit:
            break
    else:
        raise NonConvergenceError(
            f"outer loop did not reach tol_exit={tol_exit} in {max_outer} iterations",
            residual=tol_newton,
        )
    report.u, report.psi, report.lam = u, psi, lam
    report.wall_time = time.perf_counter() - t0
    report.aux["disc"] = disc
    return report


def solve_entropic_poisson(theta, f, g, mesh, tol=1e-10, dirichlet_tags=None, max_it=200,
                           exp_floor=1e-12):
    """Single-temperature semilinear solve via the latent saddle form.

    Uses step size 1/theta with a zero latent prior, so the subproblem
    coincides with the temperature-theta equation.  At small temperatures
    the latent field reaches ln(u) ~ f/theta on the coincidence set, far
    below exp underflow; cells whose exponential drops under ``exp_floor``
    are treated exactly there, as equality constraints on the cell average
    with the latent value recovered from the first equation.  Returns
    (u, psi, disc).
    """
    if theta <= 0:
        raise SolverError("temperature must be positive")
    disc = ObstacleDiscretization(
        mesh, f, lambda x, y: np.zeros_like(x), g, dirichlet_tags=dirichlet_tags
    )
    alpha = 1.0 / theta
    nw = disc.space_w.ndof
    psi = np.zeros(nw)
    u = np.zeros(disc.space_v.ndof)
    nf = len(disc.free)

    def smooth_update(p, d):
        # falls capped near the floor-crossing scale so cells only enter
        # the degenerate branch when the smooth dynamics genuinely push
        # them beneath it (uncapped falls freeze the wrong cells)
        return _damped_latent_update(p, np.maximum(d, -30.0), exp_floor)

    for it in range(1, max_it + 1):
        w_prev = u
        e = safe_exp(psi)
        deg = e < exp_floor
        rhs_v = (alpha * disc.F - disc.B @ np.where(deg, 0.0, psi))[disc.free] - alpha * (
            disc.K_fd @ disc.g_fixed
        )
        rhs_w = disc.Phi_W + e * disc.areas - disc.B_d.T @ disc.g_fixed
        if not np.any(deg):
            C = assemble_weighted_mass_w(disc.space_w, e + exp_floor)
            system = linalg.SaddleSystem(
                A=alpha * disc.K_ff, B=disc.B_f, C=C, rhs_V=rhs_v, rhs_W=rhs_w
            )
            u_free, delta = linalg.condense_and_solve(system)
            psi = smooth_update(psi, delta)
        else:
            # active cells: B_D^T u = moments of the (underflowed) image,
            # with the full latent value psi_D as the free multiplier
            act = np.flatnonzero(deg)
            ina = np.flatnonzero(~deg)
            B_f = disc.B_f.tocsc()
            B_act, B_ina = B_f[:, act], B_f[:, ina]
            C_ina = (e[ina] + exp_floor) * disc.areas[ina]
            A_schur = alpha * disc.K_ff + (B_ina.multiply(1.0 / C_ina[None, :])) @ B_ina.T
            rhs_top = rhs_v + B_ina @ (rhs_w[ina] / C_ina)
            block = _sp.vstack(
                [_sp.hstack([A_schur, B_act]), _sp.hstack([B_act.T, _sp.csr_matrix((len(act), len(act)))])]
            ).tocsc()
            sol = linalg.solve_sparse(block, np.concatenate([rhs_top, rhs_w[act]]))
            u_free = sol[:nf]
            psi_act = sol[nf:]
            delta_ina = (B_ina.T @ u_free - rhs_w[ina]) / C_ina
            psi_new = psi.copy()
            psi_new[ina] = smooth_update(psi[ina], delta_ina)
            # keep cells whose recovered multiplier stays below the floor
            # and within the scale theta*|psi| <= O(sup|f|) dictated by the
            # equation; anything larger is a spurious kink frozen at the
            # wrong place, and cells above the floor are not active at all.
            # both rejoin the exponential branch at their cell average.
            u_full = disc.compose(u_free)
            avg_u = (disc.B.T @ u_full - disc.Phi_W) / disc.areas
            bound = alpha * (2.0 * disc.f_sup + 10.0)
            rejoin = (psi_act > np.log(exp_floor)) | (psi_act < -bound)
            psi_act = np.where(
                rejoin, np.log(np.maximum(avg_u[act], exp_floor)), psi_act
            )
            psi_new[act] = psi_act
            psi = psi_new
        u = disc.compose(u_free)
        res = disc.norm_l2(u - w_prev)
        if it > 1 and res <= tol:
            return u, psi, disc
    raise NonConvergenceError(
        f"entropic solve not converged in {max_it} iterations (last step {res:.3e})",
        residual=res,
    )


def check_kkt(disc, u, lam):
    """Complementarity, primal and dual infeasibility integrals.

    complementarity = |integral of lam_h u_h|; primal infeasibility
    integrates max(-u_h, 0) at the quadrature points; dual infeasibility
    integrates max(-lam_h, 0) cellwise.
    """
    comp = abs(float(lam @ (disc.B.T @ u)))
    uq = disc.space_v.eval_at_quad(u, disc.quad)
    _, det = disc.space_v.geometry()
    w = disc.quad.weights[None, :] * det[:, None]
    primal = float(np.sum(w * np.maximum(-uq, 0.0)))
    dual = float(np.sum(disc.areas * np.maximum(-lam, 0.0)))
    return {"complementarity": comp, "primal_infeas": primal, "dual_infeas": dual}


def compute_hminus1_norm(w_coefs, space_v=None, space_w=None, disc=None,
                         dirichlet_tags=None):
    """Discrete dual norm of a latent-space field via a Riesz solve.

    Solves (grad r, grad v) = (w, v) over the H1-conforming space with
    homogeneous boundary values and returns the energy norm of r.
    """
    if disc is not None:
        space_v, space_w = disc.space_v, disc.space_w
        K_ff, B_f, free = disc.K_ff, disc.B_f, disc.free
    else:
        K = assemble_stiffness(space_v).tocsr()
        B = assemble_coupling(space_v, space_w).tocsr()
        fixed = space_v.boundary_dofs(dirichlet_tags)
        free = np.setdiff1d(np.arange(space_v.ndof), fixed)
        K_ff = K[free][:, free].tocsc()
        B_f = B[free]
    rhs = B_f @ np.asarray(w_coefs, dtype=float)
    if np.linalg.norm(rhs) == 0.0:
        return 0.0
    r = linalg.solve_spd(K_ff, rhs)
    return float(np.sqrt(max(rhs @ r, 0.0)))


def infsup_lower_bound(mesh):
    """Discrete stability constant of the bubble/constant pairing.

    Computes the smallest generalized singular value of the scaled
    coupling operator, with the dual norm realized by Riesz solves in the
    bubble-enriched space on the uniformly refined mesh (a surrogate rich
    space; using the same space would be identically one).
    """
    from scipy.linalg import eigh

    from .mesh import refine_uniform

    def gram(msh, coarse_cells=None):
        space_v = FeSpace(msh, "p1b")
        space_w = FeSpace(msh, "p0")
        K = assemble_stiffness(space_v).tocsr()
        B = assemble_coupling(space_v, space_w).tocsr()
        fixed = space_v.boundary_dofs()
        free = np.setdiff1d(np.arange(space_v.ndof), fixed)
        K_ff = K[free][:, free].tocsc()
        B_f = B[free]
        if coarse_cells is not None:
            # children of coarse cell T are stacked in four blocks of the
            # coarse cell count by the refinement, so columns aggregate
            nc = coarse_cells
            P = _sp.coo_matrix(
                (np.ones(4 * nc), (np.arange(4 * nc), np.tile(np.arange(nc), 4))),
                shape=(4 * nc, nc),
            ).tocsr()
            B_f = B_f @ P
        lu = _sp.linalg.splu(K_ff)
        dense = B_f.toarray()
        return dense.T @ np.column_stack([lu.solve(dense[:, j]) for j in range(dense.shape[1])])

    nc = mesh.num_cells
    G_num = gram(mesh)
    G_den = gram(refine_uniform(mesh), coarse_cells=nc)
    vals = eigh(G_num, G_den, eigvals_only=True)
    return float(np.sqrt(max(vals[0], 0.0)))


def plain_galerkin_advection_diffusion(mesh, eps_diff, beta, f, g):
    """Unconstrained first-order FEM solve of the advection-diffusion PDE."""
    space = FeSpace(mesh, "p1")
    K = assemble_stiffness(space)
    ADV = assemble_advection(space, beta)
    F = assemble_load(space, f)
    fixed = space.boundary_dofs()
    free = np.setdiff1d(np.arange(space.ndof), fixed)
    verts = mesh.vertices
    g_d = np.asarray(g(verts[fixed, 0], verts[fixed, 1]), dtype=float) * np.ones(len(fixed))
    A = (eps_diff * K + ADV).tocsr()
    rhs = F[free] - A[free][:, fixed] @ g_d
    u = np.zeros(space.ndof)
    u[free] = linalg.solve_sparse(A[free][:, free], rhs)
    u[fixed] = g_d
    return u, space


def lvpp_advection_diffusion(mesh, eps_diff, beta, f, g, rho=1.0, schedule=None,
                             n_outer=2, lumped=True, eps_reg=1e-6,
                             newton_tol=1e-10, clamp_delta=1e-10, max_newton=60):
    """Bound-preserving proximal loop for advection-diffusion on [0, 1] bounds.

    Initializes the latent field from one plain Galerkin solve, then runs
    ``n_outer`` linearized proximal iterations.  With ``lumped`` the latent
    coupling uses the vertex rule, which makes the primal solution nodally
    equal to sigmoid of the latent one.
    """
    from .schedules import Fixed

    t0 = time.perf_counter()
    schedule = schedule or Fixed(1.0)
    u_pg, space = plain_galerkin_advection_diffusion(mesh, eps_diff, beta, f, g)
    K = assemble_stiffness(space)
    M = assemble_mass(space)
    ADV = assemble_advection(space, beta)
    F = assemble_load(space, f)
    fixed = space.boundary_dofs()
    free = np.setdiff1d(np.arange(space.ndof), fixed)
    verts = mesh.vertices
    g_d = np.asarray(g(verts[fixed, 0], verts[fixed, 1]), dtype=float) * np.ones(len(fixed))

    m_w = lumped_mass_diagonal(space)
    B = _sp.diags(m_w).tocsr() if lumped else M.tocsr()
    K_csr = K.tocsr()
    K_ff = K_csr[free][:, free].tocsc()
    K_fd = K_csr[free][:, fixed]
    B_f, B_d = B[free], B[fixed]

    psi = lnit(np.clip(u_pg, clamp_delta, 1.0 - clamp_delta))
    u = u_pg.copy()
    lam = np.zeros(space.ndof)
    counter = linalg.SolveCounter()
    report = SolveReport(meta={"rho": rho, "eps_diff": eps_diff, "lumped": lumped})
    report.aux["u_galerkin"] = u_pg
    report.aux["space"] = space
    quad4 = triangle_quadrature(4)

    psi_fixed = lnit(np.clip(g_d, clamp_delta, 1.0 - clamp_delta))
    for k in range(1, n_outer + 1):
        alpha = schedule.next_alpha()
        u_prev, psi_prev = u, psi
        # proximal right-hand side carries the non-symmetric residual of the
        # previous iterate: L(u, v) = (1/rho - eps)(grad u, grad v) - (beta.grad u - f, v)
        l_vec = (1.0 / rho - eps_diff) * (K @ u_prev) - ADV @ u_prev + F
        rhs_v_full = alpha * l_vec + B @ psi_prev
        if lumped:
            # nodal quadrature couples u and psi pointwise, so the latent
            # variable is eliminated exactly: solve the monotone reduced
            # system (alpha/rho) K u + m lnit(u) = rhs by interior Newton
            u_f = np.clip(u[free], clamp_delta, 1.0 - clamp_delta)
            rhs_f = rhs_v_full[free] - (alpha / rho) * (K_fd @ g_d)
            for it in range(1, max_newton + 1):
                w_prev = u_f
                r = rhs_f - (alpha / rho) * (K_ff @ u_f) - m_w[free] * lnit(u_f)
                J = (alpha / rho) * K_ff + _sp.diags(m_w[free] / (u_f * (1.0 - u_f)))
                du = linalg.solve_spd(J.tocsc(), r)
                counter.tick()
                u_f = _interior_step(u_f, du)
                diff_f = u_f - w_prev
                if float(np.sqrt(max(diff_f @ (M[free][:, free] @ diff_f), 0.0))) <= newton_tol:
                    break
            else:
                raise NonConvergenceError(f"inner loop stalled at outer step {k}")
            u = np.zeros(space.ndof)
            u[free] = u_f
            u[fixed] = g_d
            psi = np.zeros(space.ndof)
            psi[free] = lnit(u_f)
            psi[fixed] = psi_fixed
        else:
            for it in range(1, max_newton + 1):
                w_prev = u
                rhs_v = (rhs_v_full - B @ psi)[free] - (alpha / rho) * (K_fd @ g_d)
                s_quad = sigmoid(space.eval_at_quad(psi, quad4))
                C_mat = assemble_mass(
                    space, quad=quad4, weight_at_quad=s_quad * (1.0 - s_quad)
                ) + eps_reg * K
                rhs_w = assemble_moment(space, s_quad, quad4) - B_d.T @ g_d
                u_free, delta = _full_block_solve(
                    (alpha / rho) * K_ff, B_f, C_mat, rhs_v, rhs_w, counter
                )
                s = sigmoid(psi)
                psi = _damped_sigmoid_update(psi, delta, s * (1.0 - s), eps_reg)
                u = np.zeros(space.ndof)
                u[free] = u_free
                u[fixed] = g_d
                if float(np.sqrt(max((u - w_prev) @ (M @ (u - w_prev)), 0.0))) <= newton_tol:
                    break
            else:
                raise NonConvergenceError(f"inner loop stalled at outer step {k}")
        lam = (psi_prev - psi) / alpha
        diff = u - u_prev
        inc_l2 = float(np.sqrt(max(diff @ (M @ diff), 0.0)))
        inc_h1 = float(np.sqrt(max(diff @ (M @ diff) + diff @ (K @ diff), 0.0)))
        energy = float(0.5 * eps_diff * u @ (K @ u) - F @ u)
        report.rows.append(IterationRow(k, alpha, inc_h1, inc_l2, it, counter.count, energy))
    report.u, report.psi, report.lam = u, psi, lam
    report.wall_time = time.perf_counter() - t0
    return report


def _interior_step(u, du, tau=0.995, floor=1e-14):
    """Newton step shortened so the iterate stays strictly inside (0, 1)."""
    s = 1.0
    neg = du < 0
    if np.any(neg):
        s = min(s, tau * np.min((u[neg] - floor) / -du[neg]))
    pos = du > 0
    if np.any(pos):
        s = min(s, tau * np.min((1.0 - floor - u[pos]) / du[pos]))
    return u + max(s, 0.0) * du


def _full_block_solve(A_ff, B_f, C_mat, rhs_v, rhs_w, counter):
    block = _sp.vstack(
        [_sp.hstack([A_ff, B_f]), _sp.hstack([B_f.T, -C_mat])]
    ).tocsc()
    x = linalg.solve_sparse(block, np.concatenate([rhs_v, rhs_w]))
    if counter is not None:
        counter.tick()
    n = A_ff.shape[0]
    return x[:n], x[n:]


def feasibility_correction(psi, kind, weights, target, tol=1e-12, max_doublings=200):
    """Constant latent shift c with sum(weights * inverse(psi + c)) = target.

    The map is strictly increasing in c, so an expanding bracket plus
    bisection always succeeds when the target is attainable.
    """
    weights = np.asarray(weights, dtype=float)

    def vol(c):
        return float(weights @ np.atleast_1d(kind.inverse(psi + c)))

    lo = hi = 0.0
    step = 1.0
    v0 = vol(0.0)
    if v0 < target:
        for _ in range(max_doublings):
            hi += step
            step *= 2.0
            if vol(hi) >= target:
                break
        else:
            raise SolverError("feasibility bisection could not bracket the target")
    elif v0 > target:
        for _ in range(max_doublings):
            lo -= step
            step *= 2.0
            if vol(lo) <= target:
                break
        else:
            raise SolverError("feasibility bisection could not bracket the target")
    scale = max(abs(target), weights.sum())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        vm = vol(mid)
        if vm < target:
            lo = mid
        else:
            hi = mid
        if abs(vm - target) <= tol * scale and (hi - lo) <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


@dataclass
class MirrorStep:
    k: int
    alpha: float
    eta: float
    correction: float
    primal: np.ndarray


def mirror_descent(grad, kind, schedule, psi0, weights, itol=1e-2, ntol=1e-5,
                   target=None, max_it=10_000, callback=None):
    """Half-step mirror descent in the latent space.

    grad maps a primal array to its gradient array (same layout); ``kind``
    supplies the mirror pair; ``weights`` are the integration weights used
    both for the L1 stopping norm and the equality functional.  When
    ``target`` is given, every iterate is projected back onto the equality
    constraint by a constant latent shift.  Returns the list of MirrorStep
    records (eta_k = increment / alpha_k).
    """
    psi = np.atleast_1d(np.asarray(psi0, dtype=float)).copy()
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    primal = np.atleast_1d(kind.inverse(psi))
    history = []
    for k in range(1, max_it + 1):
        alpha = schedule.next_alpha()
        psi_half = psi - alpha * np.atleast_1d(grad(primal))
        c = 0.0
        if target is not None:
            c = feasibility_correction(psi_half, kind, weights, target)
        psi = psi_half + c
        new_primal = np.atleast_1d(kind.inverse(psi))
        inc = float(weights @ np.abs(new_primal - primal))
        eta = inc / alpha
        primal = new_primal
        history.append(MirrorStep(k, alpha, eta, c, primal.copy()))
        if callback is not None:
            callback(history[-1])
        if inc <= min(alpha * ntol, itol):
            break
    return history
