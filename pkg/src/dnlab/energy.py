"""Total energy, the dissipation balance and monotonicity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ProblemSpec, State, Trajectory
from .operators import a_potential, kinetic_energy

MONOTONE_RTOL = 1e-12


@dataclass(frozen=True)
class EnergyRecord:
    t: float
    total: float
    kinetic: float
    potential: float
    cumulative_dissipation: float = 0.0
    balance_residual: float = 0.0


def total_energy(state: State, spec: ProblemSpec) -> EnergyRecord:
    """Kinetic plus stiffness energy of ``state``.

    Both parts use ``spec.eps_reg`` so that they are the exact
    potentials of the maps the solver integrates; at ``eps_reg = 0`` the
    kinetic part is ``P*(u_t)``.
    """
    ex, h, eps = spec.exponents, spec.grid.h, spec.eps_reg
    kin = kinetic_energy(state.w, ex.ell, h, eps)
    pot = a_potential(state.u, ex.q, spec.a, h, eps)
    return EnergyRecord(t=state.t, total=kin + pot, kinetic=kin, potential=pot)


def cumulative_dissipation(traj: Trajectory, scheme_consistent: bool = True) -> np.ndarray:
    """Running sum of released energy; the physical part only if not ``scheme_consistent``."""
    per_step = traj.dissipation
    if scheme_consistent:
        per_step = per_step + traj.numerical_dissipation
    return np.cumsum(per_step)


def balance_residual(traj: Trajectory, spec: ProblemSpec | None = None,
                     scheme_consistent: bool = True):
    """Residual series ``E_k - E_0 + sum_{j<=k} D_j`` and its max magnitude.

    With ``scheme_consistent`` the per-step release ``D_j`` includes the
    backward Euler numerical dissipation, so the residual measures only the
    Newton error. Without it ``D_j`` is the physical damping work alone and
    the residual exposes the numerical dissipation.
    """
    if spec is not None and spec != traj.spec:
        raise ValueError("trajectory was produced from a different configuration")
    series = traj.energy - traj.energy[0] + cumulative_dissipation(traj, scheme_consistent)
    return float(np.max(np.abs(series))), series


def energy_records(traj: Trajectory) -> list[EnergyRecord]:
    cum = cumulative_dissipation(traj)
    _, res = balance_residual(traj)
    return [EnergyRecord(float(t), float(e), float(k), float(p), float(c), float(r))
            for t, e, k, p, c, r in zip(traj.t, traj.energy, traj.kinetic, traj.potential,
                                        cum, res)]


@dataclass
class MonotonicityReport:
    increases: list[int] = field(default_factory=list)
    out_of_range: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.increases and not self.out_of_range

    def to_dict(self):
        return {"passed": self.passed, "increases": self.increases[:100],
                "n_increases": len(self.increases), "out_of_range": self.out_of_range[:100]}


def check_monotone(traj, rtol: float = MONOTONE_RTOL) -> MonotonicityReport:
    """Indices ``k`` where ``E_k > E_{k-1} + rtol*E_0``, plus any ``E_k`` outside ``[0, E_0]``.

    Accepts a :class:`Trajectory` or a bare energy series.
    """
    energy = np.asarray(getattr(traj, "energy", traj), dtype=float)
    if energy.size == 0:
        raise ValueError("empty trajectory")
    e0 = energy[0]
    slack = rtol * e0
    inc = np.flatnonzero(np.diff(energy) > slack) + 1
    bad = np.flatnonzero((energy < 0) | (energy > e0 * (1 + rtol)))
    return MonotonicityReport(increases=inc.tolist(), out_of_range=bad.tolist())
