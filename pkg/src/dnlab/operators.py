"""Pointwise power maps, the discrete q-Laplacian and their potentials.

All grid functions live on the interior nodes; the discrete pairing is the
rectangle rule ``<x, y>_h = h * sum(x * y)``. The flux-form q-Laplacian is
the exact ``<.,.>_h``-gradient of :func:`a_potential`, for every ``eps``.
"""

from __future__ import annotations

import numpy as np


def phi(s, p: float, eps: float = 0.0):
    """Regularized power map ``(eps**2 + s**2)**((p - 2)/2) * s``.

    With ``eps == 0`` this is exactly ``|s|**(p - 2) * s`` (and 0 at 0).
    """
    s = np.asarray(s, dtype=float)
    if eps == 0.0:
        return np.sign(s) * np.abs(s) ** (p - 1.0)
    if p == 2.0:
        return s.copy()
    return (eps * eps + s * s) ** (0.5 * (p - 2.0)) * s


def dphi(s, p: float, eps: float = 0.0):
    """Derivative of :func:`phi` in ``s``; infinite at 0 when ``eps == 0`` and ``p < 2``."""
    s = np.asarray(s, dtype=float)
    if p == 2.0:
        return np.ones_like(s)
    if eps == 0.0:
        with np.errstate(divide="ignore"):
            return (p - 1.0) * np.abs(s) ** (p - 2.0)
    r2 = eps * eps + s * s
    return r2 ** (0.5 * (p - 4.0)) * (eps * eps + (p - 1.0) * s * s)


def phi_potential(s, p: float, eps: float = 0.0):
    """Antiderivative of :func:`phi` vanishing at 0."""
    s = np.asarray(s, dtype=float)
    if eps == 0.0:
        return np.abs(s) ** p / p
    if p == 2.0:
        return 0.5 * s * s
    return ((eps * eps + s * s) ** (0.5 * p) - eps ** p) / p


def inner_h(x, y, h: float) -> float:
    return float(h * np.dot(x, y))


def norm_h(z, p: float, h: float) -> float:
    """Discrete ``l^p`` norm ``(h * sum |z|^p)**(1/p)``."""
    return float((h * np.sum(np.abs(z) ** p)) ** (1.0 / p))


def conjugate(p: float) -> float:
    return p / (p - 1.0)


def p_apply(v, ell: float, eps: float = 0.0):
    return phi(v, ell, eps)


def p_invert(w, ell: float, eps: float = 0.0):
    """Exact inverse of :func:`p_apply` at ``eps = 0``."""
    if eps != 0.0:
        raise ValueError("p_invert is only defined for the unregularized map")
    return phi(w, conjugate(ell), 0.0)


def velocity(w, ell: float, eps: float = 0.0):
    """Velocity ``u_t`` recovered from the momentum variable ``w``.

    This is the (regularized) power map with the conjugate exponent; the
    solver differentiates this map, so it carries the regularization.
    """
    return phi(w, conjugate(ell), eps)


def p_potential(v, ell: float, h: float) -> float:
    return float(h * np.sum(np.abs(v) ** ell) / ell)


def p_star(v, ell: float, h: float) -> float:
    """Legendre part ``<P v, v>_h - P_h(v)``, equal to ``||v||^ell / ell'``."""
    return float(inner_h(p_apply(v, ell), v, h) - p_potential(v, ell, h))


def kinetic_energy(w, ell: float, h: float, eps: float = 0.0) -> float:
    """Kinetic energy as a function of the momentum variable.

    Its ``<.,.>_h``-gradient is :func:`velocity`; at ``eps = 0`` it equals
    ``p_star(velocity(w))``.
    """
    return float(h * np.sum(phi_potential(w, conjugate(ell), eps)))


def gradients(u, h: float):
    """Forward differences on the ``n + 1`` cell interfaces, zero boundary values."""
    u = np.asarray(u, dtype=float)
    d = np.empty(u.size + 1)
    d[0] = u[0]
    np.subtract(u[1:], u[:-1], out=d[1:-1])
    d[-1] = -u[-1]
    d /= h
    return d


def a_apply(u, q: float, a: float, h: float, eps: float = 0.0):
    """Flux-form discrete q-Laplacian ``-(a/h) * [flux(i+1/2) - flux(i-1/2)]``."""
    flux = phi(gradients(u, h), q, eps)
    return (a / h) * (flux[:-1] - flux[1:])


def a_potential(u, q: float, a: float, h: float, eps: float = 0.0) -> float:
    return float(a * h * np.sum(phi_potential(gradients(u, h), q, eps)))


def a_jacobian(u, q: float, a: float, h: float, eps: float = 0.0):
    """Tridiagonal Jacobian of :func:`a_apply` as ``(lower, diag, upper)``."""
    g = dphi(gradients(u, h), q, eps) * (a / (h * h))
    return -g[1:-1], g[:-1] + g[1:], -g[1:-1]


def b_apply(t: float, v, spec, eps: float | None = None):
    """Damping force ``b(t, x_i) * phi_m(v_i)``."""
    if eps is None:
        eps = spec.eps_reg
    return spec.damping_at(t) * phi(v, spec.exponents.m, eps)


def dissipation(t: float, v, spec, eps: float | None = None) -> float:
    """Dissipation rate ``<B(t, v), v>_h``."""
    return inner_h(b_apply(t, v, spec, eps), v, spec.grid.h)
