"""Sample-based checks of the structural inequalities and weight conditions.

Norms of the abstract setting are realized on the grid: the inertia dual
norm is ``||.||_{ell',h}``, the damping dual norm ``||.||_{m',h}``, the
stiffness norm the discrete ``W^{1,q}`` seminorm. The optional
``rho_conj`` replaces the dual exponent used for ``delta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import Exponents, PowerProfile, ProblemSpec, WeightProfiles
from .operators import a_apply, a_potential, gradients, inner_h, norm_h, p_apply, p_potential

PASS, FAIL, SKIPPED = "PASS", "FAIL", "SKIPPED"
MIN_SAMPLES = 100
MIN_T_SAMPLES = 50


class DegenerateSampleError(ValueError):
    """Every sample produced zero dissipation, so the damping ratios are undefined."""


@dataclass
class Check:
    status: str
    constants: dict = field(default_factory=dict)
    witness: Optional[dict] = None
    note: str = ""

    def to_dict(self):
        out = {"status": self.status, "constants": self.constants}
        if self.witness is not None:
            out["witness"] = self.witness
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class AssumptionReport:
    checks: dict = field(default_factory=dict)
    sample_count: int = 0
    profiles: dict = field(default_factory=dict)

    def merge(self, other: "AssumptionReport") -> "AssumptionReport":
        checks = {**self.checks, **other.checks}
        return AssumptionReport(checks, max(self.sample_count, other.sample_count),
                                {**self.profiles, **other.profiles})

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks.values())

    def __getitem__(self, name) -> Check:
        return self.checks[name]

    def to_dict(self):
        return {"checks": {k: v.to_dict() for k, v in sorted(self.checks.items())},
                "sample_count": self.sample_count, "profiles": self.profiles,
                "passed": self.passed}


def sample_fields(rng: np.random.Generator, x: np.ndarray, length: float, count: int,
                  max_modes: int = 5) -> np.ndarray:
    """``count`` random sums of at most ``max_modes`` Dirichlet sine modes, amplitudes in [-1, 1]."""
    out = np.zeros((count, x.size))
    for i in range(count):
        n_modes = rng.integers(1, max_modes + 1)
        modes = rng.choice(np.arange(1, 2 * max_modes + 1), size=n_modes, replace=False)
        amps = rng.uniform(-1.0, 1.0, size=n_modes)
        for k, c in zip(modes, amps):
            out[i] += c * np.sin(k * np.pi * x / length)
    return out


def _samples(spec, sample_count, seed):
    if sample_count < MIN_SAMPLES:
        raise ValueError(f"sample_count must be >= {MIN_SAMPLES}, got {sample_count}")
    rng = np.random.default_rng(seed)
    return sample_fields(rng, spec.grid.nodes, spec.grid.length, sample_count)


def _time_grid(horizon, t_samples):
    return np.linspace(0.0, max(float(horizon), 1.0), t_samples)


def estimate_constants(spec: ProblemSpec, sample_count: int = 1000, seed: int = 0,
                       rho_conj: float | None = None,
                       t_samples: int = MIN_T_SAMPLES) -> AssumptionReport:
    """Empirical ``delta``, ``j`` (pairing bounds) and ``eta`` (damping bound).

    ``eta`` and ``j`` are measured on a time grid over the run horizon and
    summarized as power profiles with the damping's temporal exponent.
    """
    ex, h = spec.exponents, spec.grid.h
    rho = ex.ell_conj if rho_conj is None else rho_conj
    vs = _samples(spec, sample_count, seed)
    ts = _time_grid(spec.t_end, t_samples)

    delta = 0.0
    j_t = np.zeros(ts.size)
    eta_t = np.zeros(ts.size)
    usable = 0
    for v in vs:
        pv = p_apply(v, ex.ell)
        n_lc = norm_h(pv, ex.ell_conj, h)
        if n_lc == 0.0:
            continue
        delta = max(delta, (norm_h(pv, rho, h) / n_lc) ** ex.ell)
        for i, t in enumerate(ts):
            b = spec.damping(t, spec.grid.nodes) * p_apply(v, ex.m)
            pair = inner_h(b, v, h)
            if pair <= 0.0:
                continue
            usable += 1
            j_t[i] = max(j_t[i], n_lc ** ex.ell_conj / pair ** (ex.ell / ex.m))
            eta_t[i] = max(eta_t[i], (norm_h(b, ex.m_conj, h) / pair ** (1.0 / ex.m_conj)) ** ex.m)
    if usable == 0:
        raise DegenerateSampleError("all samples have zero dissipation (b vanishes identically?)")

    sigma = spec.damping.temporal_sigma
    bound = spec.damping.sup(ts)
    eta_profile = PowerProfile(float(np.max(eta_t / (1.0 + ts) ** sigma)), sigma)
    j_theta = -sigma * ex.ell / ex.m + 0.0
    j_profile = PowerProfile(float(np.max(j_t / (1.0 + ts) ** j_theta)), j_theta)

    worst = int(np.argmax(eta_t - bound))
    a3_ok = bool(np.all(eta_t <= bound * (1 + 1e-9)))
    a3 = Check(PASS if a3_ok else FAIL,
               {"eta_emp": eta_profile.c, "eta_theta": sigma, "eta_sup_bound": float(bound[0])},
               None if a3_ok else {"t": float(ts[worst]), "eta_emp": float(eta_t[worst]),
                                   "b_sup": float(bound[worst])},
               note="eta(t) prescribed as the sup-norm of b(t, .)")
    a2_ok = np.isfinite(delta) and np.isfinite(j_profile.c) and delta > 0
    a2 = Check(PASS if a2_ok else FAIL,
               {"delta_emp": float(delta), "j_emp": j_profile.c, "j_theta": j_theta,
                "rho_conj": rho},
               note="dual norm exponent rho' is a modelling choice"
                    + (" (default ell')" if rho_conj is None else ""))
    profiles = {"delta": [float(delta), 0.0], "eta": [eta_profile.c, eta_profile.theta],
                "j": [j_profile.c, j_profile.theta]}
    return AssumptionReport({"A2": a2, "A3": a3}, sample_count, profiles)


def empirical_weights(spec: ProblemSpec, report: AssumptionReport) -> WeightProfiles:
    """Spec weights with the empirical slots filled from ``report``."""
    prof = {k: PowerProfile(*v) for k, v in report.profiles.items()}
    return spec.weights.with_empirical(prof.get("delta"), prof.get("eta"), prof.get("j"))


def check_a1_a4(spec: ProblemSpec, sample_count: int = 1000, seed: int = 0) -> AssumptionReport:
    """Inertia bound with ``k0 = p + 1`` and the stiffness homogeneity/coercivity.

    Uses the unregularized maps. ``c0_emp`` is the largest observed
    ``||u||_X^q / A_h(u)``; for the q-Laplacian it equals ``q / a``.
    """
    ex, h, a = spec.exponents, spec.grid.h, spec.a
    p = ex.p_a1
    k0 = p + 1.0
    samples = _samples(spec, sample_count, seed)

    a1_fail = None
    worst_a1 = np.inf
    for v in samples:
        pv = p_apply(v, ex.ell)
        pair = inner_h(pv, v, h)
        pot = p_potential(v, ex.ell, h)
        star = pair - pot
        lhs = (p + 1.0) * pair - p * pot
        rhs = k0 * norm_h(pv, ex.ell_conj, h) ** ex.ell_conj
        scale = max(abs(lhs), abs(rhs), 1e-300)
        margin = (rhs - lhs) / scale
        worst_a1 = min(worst_a1, margin)
        if a1_fail is None and (star < -1e-12 * scale or margin < -1e-12):
            a1_fail = {"v": v.tolist(), "lhs": lhs, "rhs": rhs, "p_star": star}
    a1 = Check(FAIL if a1_fail else PASS, {"k0": k0, "p": p, "worst_relative_margin": worst_a1},
               a1_fail)

    a4_fail = None
    worst_gap = 0.0
    c0 = 0.0
    for u in samples:
        pot = a_potential(u, ex.q, a, h)
        pair = inner_h(a_apply(u, ex.q, a, h), u, h)
        gap = pair - ex.q * pot
        worst_gap = max(worst_gap, abs(gap))
        x_norm_q = h * np.sum(np.abs(gradients(u, h)) ** ex.q)
        if pot > 0:
            c0 = max(c0, x_norm_q / pot)
        if a4_fail is None and (gap < -1e-10 or pot < 0):
            a4_fail = {"u": u.tolist(), "pairing": pair, "q_times_potential": ex.q * pot}
    a4 = Check(FAIL if a4_fail else PASS,
               {"c0_emp": c0, "c0_expected": ex.q / a, "equality_margin": worst_gap},
               a4_fail)
    return AssumptionReport({"A1": a1, "A4": a4}, sample_count)


def _power_exponent(*terms):
    """Exponent of a product of power profiles ``prod c_i (1+t)^(k_i theta_i)``."""
    return sum(k * p.theta for k, p in terms)


def _first_bad(mask, ts):
    idx = np.flatnonzero(mask)
    return (int(idx[0]), float(ts[idx[0]])) if idx.size else (None, None)


def check_b1_b4(weights: WeightProfiles, exponents: Exponents, horizon: float,
                t_samples: int = 200) -> AssumptionReport:
    """Weight conditions on a time grid, with closed-form derivatives.

    ``weights`` must have delta, eta and j resolved. The bounded-ratio
    conditions pass when the supremum is finite on the horizon and the
    ratio's growth exponent is nonpositive, so the bound extends to all t.
    """
    if t_samples < MIN_T_SAMPLES:
        raise ValueError(f"t_samples must be >= {MIN_T_SAMPLES}")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if weights.delta is None or weights.eta is None or weights.j is None:
        raise ValueError("delta, eta and j must be resolved before checking B1-B4")
    lam, alpha, delta, eta, j = weights.lam, weights.alpha, weights.delta, weights.eta, weights.j
    ell, m, m_c = exponents.ell, exponents.m, exponents.m_conj
    ts = np.linspace(0.0, horizon, t_samples)
    checks = {}

    lhs = lam(ts)
    rhs = alpha(ts) * np.maximum(eta(ts) ** (m_c / m), delta(ts) ** (1.0 / ell))
    i, t_bad = _first_bad(lhs < rhs * (1 - 1e-9), ts)
    checks["B1"] = Check(PASS if i is None else FAIL,
                         {"min_ratio": float(np.min(lhs / rhs))},
                         None if i is None else {"t": t_bad, "lambda": float(lhs[i]),
                                                 "bound": float(rhs[i])})

    # (alpha delta^(1/ell) / lam)' for the power family, in closed form.
    c_ratio = alpha.c * delta.c ** (1.0 / ell) / lam.c
    th_ratio = _power_exponent((1, alpha), (1.0 / ell, delta), (-1, lam))
    deriv = c_ratio * th_ratio * (1.0 + ts) ** (th_ratio - 1.0)
    i, t_bad = _first_bad(deriv > 0, ts)
    checks["B2"] = Check(PASS if i is None else FAIL, {"ratio_exponent": th_ratio},
                         None if i is None else {"t": t_bad, "derivative": float(deriv[i])})

    # (lam/alpha) |(alpha/lam)'| = |theta_alpha - theta_lam| / (1 + t).
    d_th = abs(alpha.theta - lam.theta)
    b3 = d_th / (1.0 + ts) * delta(ts) ** (1.0 / ell)
    growth = (delta.theta / ell - 1.0) if d_th > 0 else None
    c_al = float(np.max(b3))
    ok = np.isfinite(c_al) and (growth is None or growth <= 0)
    k = int(np.argmax(b3))
    checks["B3"] = Check(PASS if ok else FAIL, {"c_alpha_lambda": c_al, "growth_exponent": growth},
                         None if ok else {"t": float(ts[k]), "value": float(b3[k])})

    if m == ell:
        checks["B4"] = Check(SKIPPED, note="m = ell: exponent m/(m - ell) undefined")
    else:
        ratio = j(ts) ** (m / (m - ell)) / eta(ts) ** (m_c / m)
        growth = j.theta * m / (m - ell) - eta.theta * m_c / m + 0.0
        c_je = float(np.max(ratio))
        ok = np.isfinite(c_je) and growth <= 0
        k = int(np.argmax(ratio))
        checks["B4"] = Check(PASS if ok else FAIL, {"c_j_eta": c_je, "growth_exponent": growth},
                             None if ok else {"t": float(ts[k]), "value": float(ratio[k])})
    return AssumptionReport(checks)


def verify_assumptions(spec: ProblemSpec, sample_count: int = 1000, seed: int = 0,
                       rho_conj: float | None = None, horizon: float | None = None):
    """All structural checks; returns the merged report and resolved weights."""
    consts = estimate_constants(spec, sample_count, seed, rho_conj)
    report = check_a1_a4(spec, sample_count, seed).merge(consts)
    weights = empirical_weights(spec, consts)
    horizon = horizon or max(spec.t_end, 1.0)
    report = report.merge(check_b1_b4(weights, spec.exponents, horizon))
    return report, weights
