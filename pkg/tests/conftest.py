import numpy as np
import pytest

from dnlab.model import DampingProfile, Exponents, Grid, InitialData, ProblemSpec


def make_spec(n=32, ell=2.0, m=2.0, q=2.0, b0=1.0, dt=1e-3, t_end=1.0, psi="sine", phi="zero",
              amplitude=1.0, **kw):
    return ProblemSpec(grid=Grid(n), exponents=Exponents(ell, m, q), dt=dt, t_end=t_end,
                       damping=DampingProfile(b0=b0), initial=InitialData(psi, phi, amplitude),
                       **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
