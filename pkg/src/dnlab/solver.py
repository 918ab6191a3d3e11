"""Backward Euler time stepping with a damped Newton inner solve.

The semidiscrete system is

    u' = V(w),    w' = -A_h u - B(t, V(w)),

with ``V`` the (regularized) velocity map. One step solves

    R(w+) = w+ - w + dt * [A_h(u + dt V(w+)) + B(t + dt, V(w+))] = 0

for ``w+``. Because the kinetic energy ``K`` and the stiffness potential are
convex with gradients ``V`` and ``A_h``, every exact step satisfies

    E+ = E - dt <B+, v+>_h - Breg_K(w, w+) - Breg_A(u, u+) + <v+, R>_h,

where the Bregman gaps are the scheme's numerical dissipation. The last
term is the Newton residual, so the balance ``E_k - E_0 + sum(D_j)`` checks
the solver to Newton tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dgtsv

from . import _oracle
from .model import NewtonSettings, ProblemSpec, State, Trajectory, initial_state
from .operators import a_apply, a_jacobian, a_potential, dphi, inner_h, kinetic_energy, phi

__all__ = ["NewtonSettings", "NonConvergence", "StepOutcome", "implicit_step",
           "step_residual", "step_jacobian", "run_simulation", "oracle_run"]

log = logging.getLogger(__name__)

ENERGY_FLOOR = 1e-14
MAX_DT_HALVINGS = 10
_STALL_FACTOR = 1e4


class NonConvergence(RuntimeError):
    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


@dataclass
class StepOutcome:
    state: State
    newton_iters: int
    residual_norm: float
    dissipation: float
    numerical_dissipation: float
    balance_term: float
    accepted: bool
    kinetic: float = float("nan")
    potential: float = float("nan")


class _Stepper:
    """Precomputed constants for stepping one spec."""

    def __init__(self, spec: ProblemSpec):
        ex = spec.exponents
        self.spec = spec
        self.h = spec.grid.h
        self.ell_c = ex.ell_conj
        self.m = ex.m
        self.q = ex.q
        self.a = spec.a
        self.eps = spec.eps_reg
        self.shape = spec.damping.b0 * spec.damping.shape(spec.grid.nodes)
        self.sigma = spec.damping.temporal_sigma

    def b(self, t):
        if self.sigma == 0.0:
            return self.shape
        return self.shape * (1.0 + t) ** self.sigma

    def force(self, u, v, b):
        return a_apply(u, self.q, self.a, self.h, self.eps) + b * phi(v, self.m, self.eps)

    def residual(self, w_new, u, w, dt, b):
        v = phi(w_new, self.ell_c, self.eps)
        u_new = u + dt * v
        return w_new - w + dt * self.force(u_new, v, b), v, u_new

    def jacobian(self, w_new, u_new, v, dt, b):
        """Tridiagonal ``I + (dt^2 A' + dt diag(b phi_m')) diag(V')`` as (dl, d, du)."""
        lo, di, up = a_jacobian(u_new, self.q, self.a, self.h, self.eps)
        dv = dphi(w_new, self.ell_c, self.eps)
        db = b * dphi(v, self.m, self.eps)
        d = 1.0 + (dt * dt * di + dt * db) * dv
        dl = dt * dt * lo * dv[:-1]
        du = dt * dt * up * dv[1:]
        return dl, d, du

    def energy_parts(self, u, w):
        return (kinetic_energy(w, self.spec.exponents.ell, self.h, self.eps),
                a_potential(u, self.q, self.a, self.h, self.eps))

    def step(self, state: State, dt: float, settings: NewtonSettings,
             parts=None) -> StepOutcome:
        u, w = state.u, state.w
        t_new = state.t + dt
        b = self.b(t_new)
        w_new = w.copy()
        r, v, u_new = self.residual(w_new, u, w, dt, b)
        # At w_new = w the residual is dt * force, which sets the scale.
        rnorm = np.max(np.abs(r), initial=0.0)
        target = settings.tol * max(np.max(np.abs(w), initial=0.0), rnorm)
        iters = 0
        while rnorm > target:
            if iters >= settings.max_iter:
                raise NonConvergence(
                    f"Newton did not converge at t={t_new:.6g}: |R|={rnorm:.3e} > {target:.3e}",
                    residual=rnorm)
            with np.errstate(invalid="ignore", divide="ignore"):
                dl, d, du = self.jacobian(w_new, u_new, v, dt, b)
            if not np.isfinite(d.sum() + dl.sum() + du.sum()):
                raise NonConvergence(
                    f"non-finite Newton Jacobian at t={t_new:.6g} (unregularized power map "
                    "at a zero of the velocity?)", residual=rnorm)
            *_, delta, info = dgtsv(dl, d, du, -r)
            if info != 0:
                raise NonConvergence(f"singular Newton system at t={t_new:.6g}", residual=rnorm)
            iters += 1
            s = 1.0
            r2 = np.sqrt(r.dot(r))
            for _ in range(settings.max_halvings + 1):
                trial = w_new + s * delta
                r_t, v_t, u_t = self.residual(trial, u, w, dt, b)
                rn_t = np.sqrt(r_t.dot(r_t))
                if np.isfinite(rn_t) and rn_t <= (1.0 - 1e-4 * s) * r2:
                    break
                s *= settings.backtrack
            else:
                if rnorm <= _STALL_FACTOR * target:
                    # No representable decrease left: the residual sits at its
                    # roundoff floor, amplified by the regularized flux slope.
                    break
                raise NonConvergence(
                    f"line search failed at t={t_new:.6g}: |R|={rnorm:.3e}", residual=rnorm)
            w_new, r, v, u_new = trial, r_t, v_t, u_t
            rnorm = np.max(np.abs(r), initial=0.0)

        # Scheme-consistent dissipation split.
        h, eps = self.h, self.eps
        kin, pot = parts if parts is not None else self.energy_parts(u, w)
        kin_new, pot_new = self.energy_parts(u_new, w_new)
        d_phys = dt * inner_h(b * phi(v, self.m, eps), v, h)
        breg_k = kin - kin_new - inner_h(v, w - w_new, h)
        au_new = a_apply(u_new, self.q, self.a, h, eps)
        breg_a = pot - pot_new - inner_h(au_new, u - u_new, h)
        return StepOutcome(
            state=State(t_new, u_new, w_new),
            newton_iters=iters,
            residual_norm=float(rnorm),
            dissipation=float(d_phys),
            numerical_dissipation=float(breg_k + breg_a),
            balance_term=inner_h(v, r, h),
            accepted=True,
            kinetic=kin_new,
            potential=pot_new,
        )


def step_residual(w_new, state: State, dt: float, spec: ProblemSpec):
    st = _Stepper(spec)
    return st.residual(np.asarray(w_new, float), state.u, state.w, dt, st.b(state.t + dt))[0]


def step_jacobian(w_new, state: State, dt: float, spec: ProblemSpec) -> np.ndarray:
    """Dense analytic Jacobian of :func:`step_residual` in ``w_new``."""
    st = _Stepper(spec)
    w_new = np.asarray(w_new, float)
    b = st.b(state.t + dt)
    _, v, u_new = st.residual(w_new, state.u, state.w, dt, b)
    dl, d, du = st.jacobian(w_new, u_new, v, dt, b)
    return np.diag(d) + np.diag(dl, -1) + np.diag(du, 1)


def implicit_step(state: State, dt: float, spec: ProblemSpec,
                  settings: NewtonSettings | None = None) -> StepOutcome:
    """One backward Euler step; raises :class:`NonConvergence` on failure."""
    return _Stepper(spec).step(state, dt, settings or spec.newton)


def _substep(stepper, state, dt, settings, parts, depth=0):
    """Advance by ``dt``, splitting into halves on Newton failure."""
    try:
        out = stepper.step(state, dt, settings, parts)
        return out, 0
    except NonConvergence:
        if depth >= MAX_DT_HALVINGS:
            raise
    first, r1 = _substep(stepper, state, 0.5 * dt, settings, parts, depth + 1)
    second, r2 = _substep(stepper, first.state, 0.5 * dt, settings,
                          (first.kinetic, first.potential), depth + 1)
    merged = StepOutcome(
        state=second.state,
        newton_iters=first.newton_iters + second.newton_iters,
        residual_norm=max(first.residual_norm, second.residual_norm),
        dissipation=first.dissipation + second.dissipation,
        numerical_dissipation=first.numerical_dissipation + second.numerical_dissipation,
        balance_term=first.balance_term + second.balance_term,
        accepted=True,
        kinetic=second.kinetic,
        potential=second.potential,
    )
    return merged, 1 + r1 + r2


def run_simulation(spec: ProblemSpec, snapshot_every: int | None = None,
                   state: State | None = None) -> Trajectory:
    """Fixed-step backward Euler run over ``[0, t_end]``.

    A step whose Newton solve fails is retried as two half steps, recursively
    up to ten halvings; only the macro step end is recorded. The run stops
    early with status ``energy_floor`` once the energy falls below
    ``1e-14 * E_0``.
    """
    stepper = _Stepper(spec)
    settings = spec.newton
    n_steps = spec.n_steps
    if snapshot_every is None:
        snapshot_every = max(1, n_steps // 200)
    state = initial_state(spec) if state is None else state

    rows = np.zeros((n_steps + 1, 9))
    kin, pot = stepper.energy_parts(state.u, state.w)
    e0 = kin + pot
    rows[0] = (0.0, e0, kin, pot, 0.0, 0.0, 0.0, inner_h(state.w, state.u, stepper.h), 0)
    snapshots = {0: state.copy()}
    status, retries, k = "completed", 0, 0
    for k in range(1, n_steps + 1):
        try:
            out, nret = _substep(stepper, state, spec.dt, settings, (kin, pot))
        except NonConvergence as exc:
            exc.step = k
            raise
        retries += nret
        state = out.state
        state.t = k * spec.dt
        kin, pot = out.kinetic, out.potential
        rows[k] = (state.t, kin + pot, kin, pot, out.dissipation, out.numerical_dissipation,
                   out.balance_term, inner_h(state.w, state.u, stepper.h), out.newton_iters)
        if k % snapshot_every == 0:
            snapshots[k] = state.copy()
        if e0 > 0 and kin + pot < ENERGY_FLOOR * e0:
            status = "energy_floor"
            break
    rows = rows[:k + 1]
    snapshots[len(rows) - 1] = state.copy()
    if retries:
        log.info("run needed %d step halvings", retries)
    return Trajectory(
        spec=spec, t=rows[:, 0], energy=rows[:, 1], kinetic=rows[:, 2], potential=rows[:, 3],
        dissipation=rows[:, 4], numerical_dissipation=rows[:, 5], step_residual=rows[:, 6],
        cross=rows[:, 7], newton_iters=rows[:, 8].astype(int), snapshots=snapshots,
        status=status, retries=retries)


def oracle_run(spec: ProblemSpec, refinement: int = 100) -> Trajectory:
    """Classical RK4 on the same semidiscrete system with step ``dt/refinement``.

    Energies are recorded at the implicit solver's macro times so the two
    runs compare row by row. The scheme-specific columns (dissipation split,
    Newton data) are zero.
    """
    if refinement < 10:
        raise ValueError("oracle refinement must be at least 10")
    ex = spec.exponents
    state = initial_state(spec)
    u, w = state.u.copy(), state.w.copy()
    shape = spec.damping.b0 * spec.damping.shape(spec.grid.nodes)
    rows = _oracle.rk4_run(u, w, shape, float(spec.damping.temporal_sigma), ex.ell_conj,
                           float(ex.m), float(ex.q), float(spec.a), spec.grid.h,
                           float(spec.eps_reg), spec.dt, spec.n_steps, int(refinement))
    if len(rows) < spec.n_steps + 1 or not np.all(np.isfinite(rows)):
        raise FloatingPointError(
            f"explicit oracle blew up near t={(len(rows) - 1) * spec.dt:.6g}; "
            "reduce dt*n^2 or raise the refinement")
    times = spec.dt * np.arange(len(rows))
    zeros = np.zeros(len(rows))
    return Trajectory(
        spec=spec, t=times, energy=rows[:, 0] + rows[:, 1], kinetic=rows[:, 0],
        potential=rows[:, 1], dissipation=zeros, numerical_dissipation=zeros.copy(),
        step_residual=zeros.copy(), cross=rows[:, 2], newton_iters=np.zeros(len(rows), int),
        snapshots={0: initial_state(spec), len(rows) - 1: State(times[-1], u, w)},
        status="oracle")
