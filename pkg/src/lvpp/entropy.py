# -*- coding: utf-8 -*-
"""
Legendre entropy maps and Bregman divergences.

Two families are provided.  The exponential (Boltzmann) family handles
one-sided bounds ``u >= phi`` through the latent map ``psi = ln(u - phi)``,
``u = phi + exp(psi)``.  The binary (Fermi--Dirac) family handles two-sided
bounds ``phi1 <= u <= phi2`` through ``lnit``/``sigmoid`` (and the special
``atanh``/``tanh`` pair on (-1, 1)).

All maps act pointwise on scalars or numpy arrays; bounds may themselves be
scalars or arrays evaluated at the same points.
"""
import numpy as np

# exp/sigmoid arguments are clamped here before exponentiation; latent
# variables grow like -alpha_k on active sets and must not produce NaN/inf.
EXP_CLAMP = 700.0

_ONE_BELOW_ONE = np.nextafter(1.0, 0.0)
_ONE_ABOVE_ZERO = np.nextafter(0.0, 1.0)


def safe_exp(y):
    """exp with the argument clamped to [-EXP_CLAMP, EXP_CLAMP]."""
    return np.exp(np.clip(y, -EXP_CLAMP, EXP_CLAMP))


def sigmoid(y):
    """Numerically stable logistic map; output strictly inside (0, 1)."""
    y = np.clip(np.asarray(y, dtype=float), -EXP_CLAMP, EXP_CLAMP)
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    ey = np.exp(y[~pos])
    out[~pos] = ey / (1.0 + ey)
    out = np.clip(out, _ONE_ABOVE_ZERO, _ONE_BELOW_ONE)
    return out if out.ndim else float(out)


def lnit(x):
    """Inverse of sigmoid, ln(x / (1 - x)); requires 0 < x < 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("lnit requires arguments strictly inside (0, 1)")
    out = np.log(x) - np.log1p(-x)
    return out if out.ndim else float(out)


def tanh_map(x):
    """Hyperbolic tangent, bijection from the reals onto (-1, 1)."""
    out = np.tanh(x)
    return out if np.ndim(out) else float(out)


def atanh_map(x):
    """Inverse hyperbolic tangent; requires |x| < 1."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= 1.0):
        raise ValueError("atanh requires arguments strictly inside (-1, 1)")
    out = np.arctanh(x)
    return out if out.ndim else float(out)


def neg_entropy_density(x):
    """Pointwise x*ln(x) - x with the explicit convention 0*ln(0) = 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("entropy density requires nonnegative arguments")
    out = np.zeros_like(x)
    pos = x > 0.0
    out[pos] = x[pos] * np.log(x[pos]) - x[pos]
    return out if out.ndim else float(out)


def bregman_boltzmann(u, w):
    """Relative-entropy distance u*ln(u/w) - u + w (0*ln(0) = 0)."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(u < 0.0):
        raise ValueError("bregman_boltzmann requires u >= 0")
    if np.any(w <= 0.0):
        raise ValueError("bregman_boltzmann requires w > 0")
    u, w = np.broadcast_arrays(u, w)
    out = np.array(w, dtype=float, copy=True)  # u == 0 contributes w
    pos = u > 0.0
    up, wp = u[pos], w[pos]
    out[pos] = up * (np.log(up) - np.log(wp)) - up + wp
    return out if out.ndim else float(out)


def shifted_gradient(u, phi):
    """Gradient ln(u - phi) of the entropy shifted by an obstacle phi."""
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(u <= phi):
        raise ValueError("shifted gradient requires u > phi pointwise")
    out = np.log(u - phi)
    return out if out.ndim else float(out)


class Boltzmann:
    """Exponential entropy family for the one-sided bound u >= shift."""

    def __init__(self, shift=0.0):
        self.shift = shift

    def grad(self, u):
        return shifted_gradient(u, self.shift)

    def inverse(self, y):
        out = np.asarray(self.shift, dtype=float) + safe_exp(y)
        return out if out.ndim else float(out)

    def bregman(self, u, w):
        return bregman_boltzmann(
            np.asarray(u, dtype=float) - self.shift,
            np.asarray(w, dtype=float) - self.shift,
        )


class FermiDirac:
    """Binary entropy family for the two-sided bound lower <= u <= upper."""

    def __init__(self, lower=0.0, upper=1.0):
        lo = np.asarray(lower, dtype=float)
        hi = np.asarray(upper, dtype=float)
        if np.any(lo >= hi):
            raise ValueError("FermiDirac requires lower < upper pointwise")
        self.lower = lower
        self.upper = upper

    def _gap(self):
        return np.asarray(self.upper, dtype=float) - np.asarray(self.lower, dtype=float)

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        a = u - self.lower
        b = np.asarray(self.upper, dtype=float) - u
        if np.any(a <= 0.0) or np.any(b <= 0.0):
            raise ValueError("binary entropy gradient requires lower < u < upper")
        out = np.log(a) - np.log(b)
        return out if out.ndim else float(out)

    def inverse(self, y):
        out = np.asarray(self.lower, dtype=float) + self._gap() * sigmoid(y)
        return out if np.ndim(out) else float(out)

    def bregman(self, u, w):
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        return bregman_boltzmann(u - lo, w - lo) + bregman_boltzmann(hi - u, hi - w)
