import numpy as np
import pytest

from dnlab import operators as op
from dnlab.energy import (balance_residual, check_monotone, cumulative_dissipation,
                          energy_records, total_energy)
from dnlab.model import State, initial_state
from dnlab.solver import implicit_step, run_simulation

from conftest import make_spec


@pytest.fixture(scope="module")
def nonlinear_run():
    return run_simulation(make_spec(n=32, ell=1.5, m=3.0, q=1.5, t_end=3.0, phi="bump"))


def test_zero_state_energy():
    spec = make_spec(psi="zero")
    assert total_energy(initial_state(spec), spec).total == 0.0


def test_sine_energy_quadrature():
    spec = make_spec(n=200)
    assert total_energy(initial_state(spec), spec).total == pytest.approx(np.pi ** 2 / 4, rel=1e-3)


def test_kinetic_is_half_square(rng):
    spec = make_spec(n=20)
    v = rng.standard_normal(20)
    rec = total_energy(State(0.0, np.zeros(20), v), spec)
    assert rec.kinetic == pytest.approx(0.5 * op.norm_h(v, 2, spec.grid.h) ** 2, rel=1e-14)


@pytest.mark.parametrize("ell, m, q", [(2, 2, 2), (1.5, 3, 1.5), (3, 4, 2)])
def test_single_step_balance_recomputed(ell, m, q, rng):
    n, dt = 32, 1e-3
    spec = make_spec(n=n, ell=ell, m=m, q=q)
    s0 = State(0.0, rng.standard_normal(n), op.p_apply(rng.standard_normal(n), ell))
    out = implicit_step(s0, dt, spec)
    s1 = out.state
    eps, h = spec.eps_reg, spec.grid.h
    e0, e1 = total_energy(s0, spec), total_energy(s1, spec)
    v1 = op.velocity(s1.w, ell, eps)
    d_phys = dt * op.dissipation(dt, v1, spec)
    d_kin = e0.kinetic - e1.kinetic - op.inner_h(v1, s0.w - s1.w, h)
    d_pot = e0.potential - e1.potential - op.inner_h(op.a_apply(s1.u, q, 1.0, h, eps),
                                                     s0.u - s1.u, h)
    assert d_kin >= -1e-14 * e0.total and d_pot >= -1e-14 * e0.total
    assert abs(e1.total - e0.total + d_phys + d_kin + d_pot) <= 1e-9 * e0.total


def test_zero_data_residual():
    traj = run_simulation(make_spec(psi="zero", t_end=0.2))
    _, series = balance_residual(traj)
    assert not series.any()


def test_undamped_residual_is_energy_change():
    traj = run_simulation(make_spec(n=32, b0=0.0, t_end=1.0))
    _, physical = balance_residual(traj, scheme_consistent=False)
    np.testing.assert_array_equal(physical, traj.energy - traj.energy[0])
    assert physical[-1] < 0  # numerical dissipation only
    worst, _ = balance_residual(traj)
    assert worst <= 1e-8 * traj.energy[0]


def test_balance_rejects_other_spec(nonlinear_run):
    with pytest.raises(ValueError):
        balance_residual(nonlinear_run, make_spec())


def test_balance_small(nonlinear_run):
    worst, _ = balance_residual(nonlinear_run, nonlinear_run.spec)
    assert worst <= 1e-8 * nonlinear_run.energy[0]


def test_monotone_detector():
    assert check_monotone(np.zeros(10)).passed
    e = np.linspace(1.0, 0.1, 20)
    e[7] = e[6] + 1e-3
    report = check_monotone(e)
    assert report.increases == [7]
    with pytest.raises(ValueError):
        check_monotone(np.array([]))


def test_energy_invariants(nonlinear_run):
    tr = nonlinear_run
    e0 = tr.energy[0]
    tol = 1e-12 * e0
    assert check_monotone(tr).passed
    for arr in (tr.energy, tr.kinetic, tr.potential):
        assert np.all(arr >= 0) and np.all(arr <= e0 + tol)
    cum = cumulative_dissipation(tr)
    assert np.all(np.diff(cum) >= 0) and cum[-1] <= e0 + tol
    assert np.all(np.diff(cumulative_dissipation(tr, scheme_consistent=False)) >= 0)


def test_energy_records(nonlinear_run):
    recs = energy_records(nonlinear_run)
    assert len(recs) == len(nonlinear_run)
    assert recs[0].cumulative_dissipation == 0.0
    assert recs[-1].total == nonlinear_run.energy[-1]
