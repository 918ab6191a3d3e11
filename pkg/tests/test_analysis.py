import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dnlab.analysis import (ExponentialDecay, PowerLawDecay, WindowTooShort, fit_decay,
                            fit_exponential_decay, fit_polynomial_decay, predicted_exponent,
                            tau_integral, tau_quadrature)
from dnlab.model import PowerProfile, Trajectory, WeightProfiles
from dnlab.solver import run_simulation

from conftest import make_spec

C = PowerProfile


def synthetic(energy_fn, t_end=20.0, n=2001, m=2.0, status="completed"):
    t = np.linspace(0.0, t_end, n)
    e = energy_fn(t)
    z = np.zeros_like(t)
    spec = make_spec(m=m, t_end=t_end)
    return Trajectory(spec=spec, t=t, energy=e, kinetic=z, potential=e, dissipation=z,
                      numerical_dissipation=z, step_residual=z, cross=z,
                      newton_iters=z.astype(int), status=status)


def test_tau_closed_forms():
    t = np.array([0.0, 1.0, 7.5])
    np.testing.assert_allclose(tau_integral(WeightProfiles(), t), t)
    w = WeightProfiles(lam=C(1.0, 1.0))
    np.testing.assert_allclose(tau_integral(w, t), np.log1p(t))
    w2 = WeightProfiles(lam=C(1.0, 2.0))
    assert tau_integral(w2, 1e8) <= 1.0


@pytest.mark.parametrize("ca, ta, cl, tl", [(1, 0, 1, 0), (2, 0.5, 1, 0), (1, 0, 3, 1),
                                            (1, -0.3, 1, 0.7), (0.5, 1, 2, 2.5)])
def test_tau_matches_quadrature(ca, ta, cl, tl):
    w = WeightProfiles(lam=C(cl, tl), alpha=C(ca, ta))
    t = np.array([0.5, 3.0, 40.0])
    ref = tau_quadrature(lambda s: w.alpha(s) / w.lam(s), t)
    np.testing.assert_allclose(tau_integral(w, t), ref, rtol=1e-8)


def test_quadrature_against_constant():
    assert tau_quadrature(lambda s: np.full_like(s, 2.0), 3.0) == pytest.approx(6.0, rel=1e-12)


def test_predicted_exponents():
    assert predicted_exponent(2, 3) == -2.0
    assert predicted_exponent(2, 4) == -1.0
    assert predicted_exponent(2, 2) == float("-inf")


def test_power_law_exact():
    tr = synthetic(lambda t: (1 + t) ** -2.0, t_end=100.0, m=3.0)
    fit = fit_polynomial_decay(tr)
    assert fit.fitted_slope == pytest.approx(-2.0, abs=1e-6)
    assert fit.r_squared >= 1 - 1e-9
    assert fit.passed and fit.stability_ratio == pytest.approx(1.0)
    assert fit.predicted_exponent == -2.0


def test_exponential_exact():
    tr = synthetic(lambda t: 5.0 * np.exp(-3.0 * t), t_end=5.0)
    fit = fit_exponential_decay(tr)
    assert -fit.fitted_slope == pytest.approx(3.0, rel=1e-6)
    assert fit.constant == pytest.approx(5.0, rel=1e-6)
    assert fit.passed


def test_slow_power_law_fails_bound():
    fit = fit_polynomial_decay(synthetic(lambda t: (1 + t) ** -1.0, t_end=100.0, m=3.0))
    assert not fit.passed


def test_scaling_invariance():
    base = synthetic(lambda t: (1 + t) ** -1.3 * (2 + np.sin(t)), t_end=60.0, m=4.0)
    scaled = synthetic(lambda t: 7.0 * (1 + t) ** -1.3 * (2 + np.sin(t)), t_end=60.0, m=4.0)
    a, b = fit_polynomial_decay(base), fit_polynomial_decay(scaled)
    assert a.fitted_slope == pytest.approx(b.fitted_slope, abs=1e-9)


def test_window_too_short():
    with pytest.raises(WindowTooShort):
        fit_polynomial_decay(synthetic(lambda t: (1 + t) ** -2.0, n=40, m=3.0))
    with pytest.raises(WindowTooShort):
        fit_polynomial_decay(synthetic(lambda t: (1 + t) ** -2.0, m=3.0, status="energy_floor"))


def test_mode_guards():
    with pytest.raises(ValueError):
        fit_polynomial_decay(synthetic(np.exp))
    with pytest.raises(ValueError):
        fit_exponential_decay(synthetic(lambda t: 1 / (1 + t), m=3.0))


def test_tail_sup_nonincreasing_in_window_start():
    tr = synthetic(lambda t: (1 + t) ** -2.5, t_end=100.0, m=3.0)
    sups = [fit_polynomial_decay(tr, window_fraction=f).tail_bound_sup for f in (0.8, 0.5, 0.2)]
    assert sups[0] >= sups[1] >= sups[2]


def test_estimators_follow_sklearn_protocol():
    est = PowerLawDecay()
    with pytest.raises(NotFittedError):
        est.predict([1.0])
    tau = np.linspace(0, 10, 50)
    y = 3.0 * (1 + tau) ** -1.5
    est.fit(tau, y)
    np.testing.assert_allclose(est.predict(tau), y, rtol=1e-10)
    assert est.score(tau.reshape(-1, 1), y) == pytest.approx(1.0)
    assert clone(ExponentialDecay()).get_params() == {}
    with pytest.raises(ValueError):
        ExponentialDecay().fit(tau, -y)


def test_linear_rate_short():
    traj = run_simulation(make_spec(n=64, t_end=10.0))
    fit = fit_decay(traj)
    assert fit.mode == "exponential"
    assert -fit.fitted_slope == pytest.approx(1.0, rel=0.1)


def test_undamped_flagged():
    traj = run_simulation(make_spec(n=16, b0=0.0, t_end=2.0))
    fit = fit_exponential_decay(traj)
    assert "numerical dissipation only (b0 = 0)" in fit.notes


def test_to_dict_roundtrip():
    fit = fit_exponential_decay(synthetic(lambda t: np.exp(-t)))
    d = fit.to_dict()
    assert d["mode"] == "exponential" and d["fit_window"] == [10.0, 20.0]
    assert 0 <= d["r_squared"] <= 1
