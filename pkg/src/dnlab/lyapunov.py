"""Perturbed energy functionals H and G and their diagnostics.

For a trajectory with energy ``E`` and cross term ``C = <P(u_t), u>_h``:

    H = lam E + mu alpha E^r C
    G = H + nu alpha delta^(1/ell) E^s,     s = r + 1/q + 1/ell'

and ``F = G / lam`` is expected to be nonincreasing for small ``mu``, with
``k1 E <= F <= k2 E``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .energy import total_energy
from .model import Exponents, PowerProfile, ProblemSpec, State, Trajectory, WeightProfiles
from .operators import inner_h

MU_CANDIDATES = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6)
MONOTONE_RTOL = 1e-12


class TuningError(RuntimeError):
    """No candidate ``mu`` satisfied both the equivalence and monotonicity checks."""


def r_exponent(m: float, ell: float) -> float:
    if m < ell:
        raise ValueError(f"r is defined for m >= ell, got m={m}, ell={ell}")
    return (m - ell) / ell


def nu_linked(mu: float, ex: Exponents, c4: float = 1.0) -> float:
    return mu * c4 * ex.q * (ex.m - ex.ell) / (ex.q * (ex.m - 1.0) + ex.ell)


@dataclass(frozen=True)
class LyapunovParams:
    mu: float
    nu: float
    r: float
    ell: float
    q: float
    m: float
    c4: float = 1.0

    @classmethod
    def from_exponents(cls, ex: Exponents, mu: float, nu: Optional[float] = None,
                       c4: float = 1.0) -> "LyapunovParams":
        if nu is None:
            nu = nu_linked(mu, ex, c4)
        return cls(mu=mu, nu=nu, r=r_exponent(ex.m, ex.ell), ell=ex.ell, q=ex.q, m=ex.m, c4=c4)

    @property
    def s_g(self) -> float:
        return self.r + 1.0 / self.q + (self.ell - 1.0) / self.ell

    def scaled(self, mu: float) -> "LyapunovParams":
        ex = Exponents(ell=self.ell, m=self.m, q=self.q)
        return LyapunovParams.from_exponents(ex, mu, c4=self.c4)


def _delta(weights: WeightProfiles) -> PowerProfile:
    # Empirical delta on the discrete grid with the default dual exponent is 1.
    return weights.delta if weights.delta is not None else PowerProfile(1.0, 0.0)


def _epow(energy, s):
    # 0**0 = 1 and 0**s = 0 for s > 0, the continuity convention.
    return np.power(np.maximum(energy, 0.0), s)


def cross_term(state: State, spec: ProblemSpec) -> float:
    return inner_h(state.w, state.u, spec.grid.h)


def f_values(energy, cross, t, params: LyapunovParams, weights: WeightProfiles):
    """``(H/lam, G/lam)`` evaluated from energy and cross-term series."""
    energy = np.asarray(energy, dtype=float)
    a_over_l = weights.alpha(t) / weights.lam(t)
    h_over = energy + params.mu * a_over_l * _epow(energy, params.r) * np.asarray(cross)
    g_over = h_over + params.nu * a_over_l * _delta(weights)(t) ** (1.0 / params.ell) \
        * _epow(energy, params.s_g)
    return h_over, g_over


def h_functional(state: State, spec: ProblemSpec, params: LyapunovParams,
                 weights: WeightProfiles | None = None) -> float:
    weights = weights or spec.weights
    e = total_energy(state, spec).total
    h_over, _ = f_values(e, cross_term(state, spec), state.t, params, weights)
    return float(weights.lam(state.t) * h_over)


def g_functional(state: State, spec: ProblemSpec, params: LyapunovParams,
                 weights: WeightProfiles | None = None) -> float:
    weights = weights or spec.weights
    e = total_energy(state, spec).total
    _, g_over = f_values(e, cross_term(state, spec), state.t, params, weights)
    return float(weights.lam(state.t) * g_over)


def functional_series(traj: Trajectory, params: LyapunovParams, weights: WeightProfiles):
    """Columns ``H_over_lambda``, ``G_over_lambda`` and ``F_diff`` for a trajectory."""
    h_over, g_over = f_values(traj.energy, traj.cross, traj.t, params, weights)
    f_diff = np.concatenate(([0.0], np.diff(g_over)))
    return {"H_over_lambda": h_over, "G_over_lambda": g_over, "F_diff": f_diff}


def cross_rate(traj: Trajectory) -> np.ndarray:
    """Difference quotient of the cross term; noisy, emitted as a diagnostic only."""
    return np.diff(traj.cross) / np.diff(traj.t)


def _window(traj: Trajectory) -> int:
    """Number of leading rows with strictly positive energy."""
    zero = np.flatnonzero(traj.energy <= 0.0)
    return int(zero[0]) if zero.size else len(traj)


@dataclass
class EquivalenceReport:
    k1_emp: float
    k2_emp: float
    k1: float
    k2: float
    c1_emp: float
    c_star: float
    violations: int
    window: int

    @property
    def passed(self) -> bool:
        return (self.k1 > 0 and 0 < self.k1_emp and np.isfinite(self.k2_emp)
                and self.violations == 0)

    def to_dict(self):
        return {"k1_emp": self.k1_emp, "k2_emp": self.k2_emp, "k1": self.k1, "k2": self.k2,
                "c1_emp": self.c1_emp, "c_star": self.c_star, "violations": self.violations,
                "window": self.window, "passed": self.passed}


def equivalence_bounds(traj: Trajectory, params: LyapunovParams,
                       weights: WeightProfiles) -> EquivalenceReport:
    """Empirical constants of ``k1 E <= G/lam <= k2 E`` against the closed-form bound.

    That bound is ``k1,2 = 1 -/+ (mu c1 + nu) c*_E sup(alpha delta^(1/ell)/lam)``
    with ``c*_E = E_0^(s - 1)`` and ``c1`` the measured constant of
    ``|C| <= c1 delta^(1/ell) E^(1/ell' + 1/q)``.
    """
    k = _window(traj)
    if k == 0:
        raise ValueError("empty window: energy vanishes along the whole trajectory")
    e, c, t = traj.energy[:k], traj.cross[:k], traj.t[:k]
    _, f = f_values(e, c, t, params, weights)
    ratio = f / e
    d_root = _delta(weights)(t) ** (1.0 / params.ell)
    c1 = float(np.max(np.abs(c) / (d_root * e ** ((params.ell - 1) / params.ell + 1 / params.q))))
    c_star = float(e[0] ** (params.s_g - 1.0))
    beta = float(np.max(weights.alpha(t) * d_root / weights.lam(t)))
    spread = (params.mu * c1 + params.nu) * c_star * beta
    k1, k2 = 1.0 - spread, 1.0 + spread
    slack = 1e-12
    bad = (f < k1 * e * (1 - slack)) | (f > k2 * e * (1 + slack))
    return EquivalenceReport(k1_emp=float(ratio.min()), k2_emp=float(ratio.max()), k1=k1, k2=k2,
                             c1_emp=c1, c_star=c_star, violations=int(bad.sum()), window=k)


@dataclass
class GMonotoneReport:
    violations: list[int] = field(default_factory=list)
    k4_emp: float = float("nan")

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self):
        return {"passed": self.passed, "n_violations": len(self.violations),
                "violations": self.violations[:100], "k4_emp": self.k4_emp}


def check_g_monotone(traj: Trajectory, params: LyapunovParams, weights: WeightProfiles,
                     rtol: float = MONOTONE_RTOL) -> GMonotoneReport:
    """Steps where ``F = G/lam`` rises by more than ``rtol * F_0``, and the fitted ``k4``.

    ``k4_emp`` is the smallest observed ``-dF / (dt (alpha/lam) F^(m/ell))``
    over decreasing steps.
    """
    k = _window(traj)
    t = traj.t[:k]
    _, f = f_values(traj.energy[:k], traj.cross[:k], t, params, weights)
    if f.size < 2:
        return GMonotoneReport()
    df = np.diff(f)
    viol = (np.flatnonzero(df > rtol * abs(f[0])) + 1).tolist()
    a_over_l = weights.alpha(t[1:]) / weights.lam(t[1:])
    dec = df < 0
    k4 = float("nan")
    if np.any(dec):
        denom = np.diff(t)[dec] * a_over_l[dec] * np.maximum(f[1:][dec], 0.0) ** (params.m / params.ell)
        with np.errstate(divide="ignore"):
            k4 = float(np.min(-df[dec] / denom))
    return GMonotoneReport(violations=viol, k4_emp=k4)


@dataclass
class TuneResult:
    mu: float
    nu: float
    params: LyapunovParams
    equivalence: EquivalenceReport
    monotone: GMonotoneReport
    tried: list = field(default_factory=list)

    def to_dict(self):
        return {"mu": self.mu, "nu": self.nu, "equivalence": self.equivalence.to_dict(),
                "g_monotone": self.monotone.to_dict(), "tried": self.tried}


def tune_mu(source: Union[Trajectory, Callable[[], Trajectory]], params: LyapunovParams,
            weights: WeightProfiles, candidates=MU_CANDIDATES, min_k1: float = 0.5) -> TuneResult:
    """Largest ``mu`` from a geometric scan passing both functional checks.

    ``nu`` follows ``mu`` through the linkage ``nu = mu c4 q (m - ell) / (q (m - 1) + ell)``.
    ``source`` may be a trajectory or a zero-argument callable producing one.
    """
    traj = source() if callable(source) else source
    tried = []
    for mu in sorted(candidates, reverse=True):
        p = params.scaled(mu)
        try:
            eq = equivalence_bounds(traj, p, weights)
        except ValueError as exc:
            raise TuningError(str(exc)) from exc
        mono = check_g_monotone(traj, p, weights)
        ok = eq.passed and eq.k1_emp >= min_k1 and mono.passed
        tried.append({"mu": mu, "k1_emp": eq.k1_emp, "violations": len(mono.violations),
                      "equivalence": eq.passed, "passed": ok})
        if ok:
            return TuneResult(mu=mu, nu=p.nu, params=p, equivalence=eq, monotone=mono,
                              tried=tried)
    raise TuningError(f"no mu in {list(candidates)} passed; scan: {tried}")
