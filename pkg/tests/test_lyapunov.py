import numpy as np
import pytest
from hypothesis import given, strategies as st

from dnlab import operators as op
from dnlab.energy import total_energy
from dnlab.lyapunov import (LyapunovParams, TuningError, check_g_monotone, cross_rate, cross_term,
                            equivalence_bounds, f_values, functional_series, g_functional,
                            h_functional, nu_linked, r_exponent, tune_mu)
from dnlab.model import Exponents, PowerProfile, State, Trajectory, WeightProfiles
from dnlab.solver import run_simulation

from conftest import make_spec

W = WeightProfiles()


@pytest.fixture(scope="module")
def run_m3():
    return run_simulation(make_spec(n=32, m=3.0, t_end=5.0))


@pytest.fixture(scope="module")
def run_linear():
    return run_simulation(make_spec(n=32, t_end=5.0))


def params(ell=2.0, m=2.0, q=2.0, mu=0.0, nu=None):
    return LyapunovParams.from_exponents(Exponents(ell, m, q), mu, nu)


def test_r_exponent():
    assert r_exponent(4, 2) == 1
    assert r_exponent(2, 2) == 0
    assert r_exponent(3, 2) == 0.5
    with pytest.raises(ValueError):
        r_exponent(1.5, 2)


def test_nu_linkage_vanishes_for_equal_exponents():
    assert nu_linked(0.1, Exponents(3, 3, 2)) == 0.0
    assert nu_linked(0.1, Exponents(2, 4, 2), c4=2.0) == pytest.approx(0.2 * 2 * 2 / 8)


@given(st.floats(1.05, 6), st.floats(0, 6), st.floats(0.05, 1))
def test_s_g_at_least_one(ell, dm, qf):
    q = 1.0 + qf * (ell - 1.0)
    p = params(ell, ell + dm, q)
    assert p.s_g >= 1.0 - 1e-12


def test_cross_term_examples(rng):
    spec = make_spec(n=16)
    u = rng.standard_normal(16)
    assert cross_term(State(0.0, u, np.zeros(16)), spec) == 0.0
    v = rng.standard_normal(16)
    assert cross_term(State(0.0, u, v), spec) == pytest.approx(op.inner_h(v, u, spec.grid.h))


@pytest.mark.parametrize("ell", [1.5, 3.0])
def test_cross_term_holder(ell, rng):
    spec = make_spec(n=16, ell=ell, m=ell, q=1.5)
    h = spec.grid.h
    for _ in range(20):
        u, w = rng.standard_normal(16), rng.standard_normal(16)
        bound = op.norm_h(w, op.conjugate(ell), h) * op.norm_h(u, ell, h)
        assert abs(cross_term(State(0.0, u, w), spec)) <= bound * (1 + 1e-12)


def test_h_and_g_degenerate_cases(rng):
    spec = make_spec(n=16, m=3.0)
    weights = WeightProfiles(lam=PowerProfile(2.0, 0.5))
    s = State(1.0, rng.standard_normal(16), rng.standard_normal(16))
    e = total_energy(s, spec).total
    assert h_functional(s, spec, params(m=3.0), weights) == pytest.approx(weights.lam(1.0) * e)
    p = params(m=3.0, mu=0.05, nu=0.0)
    assert g_functional(s, spec, p, weights) == h_functional(s, spec, p, weights)
    zero = State(0.0, np.zeros(16), np.zeros(16))
    assert h_functional(zero, spec, p, weights) == 0.0
    assert g_functional(zero, spec, params(m=3.0, mu=0.05), weights) == 0.0


def test_h_rearranged(rng):
    spec = make_spec(n=16, m=4.0)
    weights = WeightProfiles(lam=PowerProfile(1.5, 0.3), alpha=PowerProfile(0.7, -0.2))
    p = params(m=4.0, mu=0.03)
    for _ in range(10):
        s = State(rng.uniform(0, 5), rng.standard_normal(16), rng.standard_normal(16))
        e = total_energy(s, spec).total
        lam, alpha = weights.lam(s.t), weights.alpha(s.t)
        alt = lam * e * (1 + p.mu * (alpha / lam) * e ** (p.r - 1) * cross_term(s, spec))
        assert h_functional(s, spec, p, weights) == pytest.approx(alt, rel=1e-12)


def test_g_increases_with_nu(rng):
    spec = make_spec(n=16, m=3.0)
    s = State(0.0, rng.standard_normal(16), rng.standard_normal(16))
    vals = [g_functional(s, spec, params(m=3.0, mu=0.01, nu=nu), W) for nu in (0, 0.01, 0.1)]
    assert vals[0] < vals[1] < vals[2]


def test_equivalence_exact_without_perturbation(run_m3):
    rep = equivalence_bounds(run_m3, params(m=3.0), W)
    assert rep.k1_emp == 1.0 and rep.k2_emp == 1.0
    h_over, g_over = f_values(run_m3.energy, run_m3.cross, run_m3.t, params(m=3.0), W)
    np.testing.assert_array_equal(g_over, run_m3.energy)


def test_equivalence_small_perturbation(run_m3):
    rep = equivalence_bounds(run_m3, params(m=3.0, mu=0.01, nu=0.01), W)
    assert 0.8 <= rep.k1_emp <= rep.k2_emp <= 1.2
    assert rep.violations == 0 and rep.passed


def test_equivalence_empty_window():
    traj = run_simulation(make_spec(psi="zero", t_end=0.05))
    with pytest.raises(ValueError):
        equivalence_bounds(traj, params(), W)


def test_g_monotone_cases(run_linear):
    assert check_g_monotone(run_linear, params(mu=0.01), W).passed
    assert check_g_monotone(run_linear, params(), W).passed
    big = check_g_monotone(run_linear, params(mu=1e3), W)
    assert isinstance(big.violations, list)


def test_tune_linear(run_linear):
    res = tune_mu(run_linear, params(), W)
    assert res.mu >= 1e-4 and res.nu == 0.0
    assert res.equivalence.k1_emp >= 0.5 and res.monotone.passed


def test_tune_accepts_callable():
    spec = make_spec(n=16, ell=3.0, m=3.0, t_end=1.0)
    res = tune_mu(lambda: run_simulation(spec), params(3.0, 3.0, 2.0), W)
    assert res.nu == 0.0


def _synthetic(energy, cross):
    spec = make_spec()
    z = np.zeros_like(energy)
    return Trajectory(spec=spec, t=np.arange(energy.size) * 0.1, energy=energy, kinetic=z,
                      potential=energy, dissipation=z, numerical_dissipation=z,
                      step_residual=z, cross=cross, newton_iters=z.astype(int))


def test_tune_failure():
    energy = np.linspace(1.0, 2.0, 30)  # energy that grows cannot be tuned away
    with pytest.raises(TuningError):
        tune_mu(_synthetic(energy, np.zeros(30)), params(), W)


def test_series_and_rate(run_m3):
    cols = functional_series(run_m3, params(m=3.0, mu=0.01), W)
    assert cols["F_diff"][0] == 0.0
    np.testing.assert_allclose(np.diff(cols["G_over_lambda"]), cols["F_diff"][1:])
    assert cross_rate(run_m3).size == len(run_m3) - 1
