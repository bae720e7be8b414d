# -*- coding: utf-8 -*-
"""
Independent brute-force references: scalar proximal/mirror recursions for
the model objective e(x) = x^2/2 + x over [0, inf), and a projected-SOR
solver for the one-dimensional obstacle problem.  These are deliberately
simple and share no code with the main solvers.
"""
import math

import numpy as np


class OracleError(RuntimeError):
    pass


def scalar_prox_step(x_k, alpha=1.0):
    """One entropic proximal step for e(x) = x^2/2 + x from x_k > 0.

    Solves alpha*(x + 1) + ln(x) - ln(x_k) = 0 by safeguarded Newton; the
    left side is strictly increasing, so the root is unique.
    """
    if x_k <= 0:
        raise OracleError("prox step needs x_k > 0")
    if alpha == 0.0:
        return x_k

    def g(x):
        return alpha * (x + 1.0) + math.log(x) - math.log(x_k)

    lo, hi = x_k, x_k
    while g(lo) > 0:
        lo *= 0.5
    while g(hi) < 0:
        hi *= 2.0
    x = 0.5 * (lo + hi)
    for _ in range(200):
        gx = g(x)
        if abs(gx) < 1e-13:
            break
        if gx > 0:
            hi = x
        else:
            lo = x
        step = x - gx / (alpha + 1.0 / x)
        x = step if lo < step < hi else 0.5 * (lo + hi)
    return x


def scalar_mirror_step(x_k, alpha=1.0):
    """One entropic mirror-descent step: x_k * exp(-alpha * (x_k + 1))."""
    if x_k <= 0:
        raise OracleError("mirror step needs x_k > 0")
    return x_k * math.exp(-alpha * (x_k + 1.0))


def psor_obstacle_1d(n, f, phi, g, tol=1e-12, omega=1.5, max_sweeps=200_000):
    """Projected SOR on the P1 system for -u'' = f, u >= phi on (0, 1).

    Parameters
    ----------
    n : number of nodes including both endpoints (n >= 3)
    f, phi : callables of x (phi may return -inf for no obstacle)
    g : callable of x giving the boundary values at 0 and 1
    tol : complementarity-residual stopping threshold

    Returns the nodal values on the uniform grid.
    """
    if n < 3:
        raise OracleError("psor_obstacle_1d needs n >= 3 nodes")
    x = np.linspace(0.0, 1.0, n)
    h = x[1] - x[0]
    diag = 2.0 / h
    off = -1.0 / h
    # consistent P1 load via two-point Gauss on each interval
    gp = 0.5 / math.sqrt(3.0)
    b = np.zeros(n)
    for i in range(n - 1):
        for xi, wl, wr in (
            (x[i] + (0.5 - gp) * h, 0.5 + gp, 0.5 - gp),
            (x[i] + (0.5 + gp) * h, 0.5 - gp, 0.5 + gp),
        ):
            fv = 0.5 * h * f(xi)
            b[i] += fv * wl
            b[i + 1] += fv * wr
    lo = np.array([phi(xi) for xi in x], dtype=float)
    u = np.maximum(lo, 0.0)
    u[0], u[-1] = g(0.0), g(1.0)
    if u[0] < lo[0] or u[-1] < lo[-1]:
        raise OracleError("boundary data below the obstacle")

    # red-black ordering so the projected sweeps vectorize
    interior = np.arange(1, n - 1)
    colors = (interior[interior % 2 == 1], interior[interior % 2 == 0])
    for _ in range(max_sweeps):
        for idx in colors:
            r = b[idx] - off * (u[idx - 1] + u[idx + 1]) - diag * u[idx]
            u[idx] = np.maximum(lo[idx], u[idx] + omega * r / diag)
        force = diag * u[1:-1] + off * (u[:-2] + u[2:]) - b[1:-1]  # (K u - b)_i
        crit = np.minimum(u[1:-1] - lo[1:-1], force)
        if np.max(np.abs(crit)) < tol:
            return u
    raise OracleError(f"PSOR failed to reach tol={tol} in {max_sweeps} sweeps")
