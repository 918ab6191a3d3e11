"""Explicit RK4 kernel for the verification oracle.

Written directly against the semidiscrete equations with its own loops, so
it shares no code with the operator module it is used to check.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _pow_map(s, p, eps):
    if eps == 0.0:
        if s == 0.0:
            return 0.0
        return np.sign(s) * abs(s) ** (p - 1.0)
    return (eps * eps + s * s) ** (0.5 * (p - 2.0)) * s


@numba.njit(cache=True)
def _pot(s, p, eps):
    if eps == 0.0:
        return abs(s) ** p / p
    return ((eps * eps + s * s) ** (0.5 * p) - eps ** p) / p


@numba.njit(cache=True)
def _rhs(u, w, bvec, ell_c, m, q, a, h, eps, du, dw):
    n = u.shape[0]
    left = _pow_map(u[0] / h, q, eps)  # flux through x = 0
    for i in range(n):
        right_u = u[i + 1] if i + 1 < n else 0.0
        right = _pow_map((right_u - u[i]) / h, q, eps)
        v = _pow_map(w[i], ell_c, eps)
        du[i] = v
        dw[i] = (a / h) * (right - left) - bvec[i] * _pow_map(v, m, eps)
        left = right


@numba.njit(cache=True)
def energy(u, w, ell_c, q, a, h, eps):
    n = u.shape[0]
    kin = 0.0
    pot = 0.0
    prev = 0.0
    for i in range(n):
        kin += _pot(w[i], ell_c, eps)
        pot += _pot((u[i] - prev) / h, q, eps)
        prev = u[i]
    pot += _pot(-prev / h, q, eps)
    return h * kin, a * h * pot


@numba.njit(cache=True)
def rk4_run(u, w, shape, sigma, ell_c, m, q, a, h, eps, dt_macro, n_macro, refinement):
    """Integrate and return (kinetic, potential, cross) at every macro time."""
    n = u.shape[0]
    out = np.empty((n_macro + 1, 3))
    k1u = np.empty(n); k1w = np.empty(n)
    k2u = np.empty(n); k2w = np.empty(n)
    k3u = np.empty(n); k3w = np.empty(n)
    k4u = np.empty(n); k4w = np.empty(n)
    tu = np.empty(n); tw = np.empty(n)
    b = np.empty(n)
    dt = dt_macro / refinement
    kin, pot = energy(u, w, ell_c, q, a, h, eps)
    out[0, 0] = kin
    out[0, 1] = pot
    out[0, 2] = h * np.dot(u, w)
    for k in range(1, n_macro + 1):
        t0 = (k - 1) * dt_macro
        for j in range(refinement):
            t = t0 + j * dt
            for i in range(n):
                b[i] = shape[i] * (1.0 + t) ** sigma
            _rhs(u, w, b, ell_c, m, q, a, h, eps, k1u, k1w)
            for i in range(n):
                tu[i] = u[i] + 0.5 * dt * k1u[i]
                tw[i] = w[i] + 0.5 * dt * k1w[i]
                b[i] = shape[i] * (1.0 + t + 0.5 * dt) ** sigma
            _rhs(tu, tw, b, ell_c, m, q, a, h, eps, k2u, k2w)
            for i in range(n):
                tu[i] = u[i] + 0.5 * dt * k2u[i]
                tw[i] = w[i] + 0.5 * dt * k2w[i]
            _rhs(tu, tw, b, ell_c, m, q, a, h, eps, k3u, k3w)
            for i in range(n):
                tu[i] = u[i] + dt * k3u[i]
                tw[i] = w[i] + dt * k3w[i]
                b[i] = shape[i] * (1.0 + t + dt) ** sigma
            _rhs(tu, tw, b, ell_c, m, q, a, h, eps, k4u, k4w)
            for i in range(n):
                u[i] += dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i])
                w[i] += dt / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i])
        kin, pot = energy(u, w, ell_c, q, a, h, eps)
        out[k, 0] = kin
        out[k, 1] = pot
        out[k, 2] = h * np.dot(u, w)
        if not (np.isfinite(kin) and np.isfinite(pot)):
            return out[:k + 1]
    return out
