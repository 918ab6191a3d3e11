"""Discretized domain, problem configuration, state and weight profiles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class ConfigError(ValueError):
    """A configuration value violates a model invariant."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``(0, length)`` with homogeneous Dirichlet ends.

    Only the ``n`` interior nodes carry unknowns; the boundary values are
    identically zero and never stored.
    """

    n: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError(f"grid.n must be an integer >= 2, got {self.n!r}")
        if not (self.length > 0 and np.isfinite(self.length)):
            raise ConfigError(f"grid.length must be positive, got {self.length!r}")

    @property
    def h(self) -> float:
        return self.length / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)


def build_grid(n: int, length: float) -> Grid:
    return Grid(n=n, length=length)


@dataclass(frozen=True)
class Exponents:
    """Growth exponents: inertia ``ell``, damping ``m``, stiffness ``q``.

    ``p_a1`` is the free constant ``p > 0`` entering the first structural
    inequality on the inertia operator.
    """

    ell: float = 2.0
    m: float = 2.0
    q: float = 2.0
    p_a1: float = 1.0

    def __post_init__(self):
        if not self.ell > 1:
            raise ConfigError(f"exponents.ell must satisfy ell > 1, got {self.ell}")
        if not self.m >= self.ell:
            raise ConfigError(
                f"exponents.m must satisfy ell <= m (got ell={self.ell}, m={self.m})")
        if not self.q > 1:
            raise ConfigError(f"exponents.q must satisfy q > 1, got {self.q}")
        if not self.q <= self.ell:
            raise ConfigError(
                f"exponents.q must satisfy q <= ell (got q={self.q}, ell={self.ell})")
        if not self.p_a1 > 0:
            raise ConfigError(f"exponents.p_a1 must be positive, got {self.p_a1}")

    @property
    def ell_conj(self) -> float:
        return self.ell / (self.ell - 1.0)

    @property
    def m_conj(self) -> float:
        return self.m / (self.m - 1.0)


@dataclass(frozen=True)
class PowerProfile:
    """Time profile ``c * (1 + t)**theta``."""

    c: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if not (self.c > 0 and np.isfinite(self.c)):
            raise ConfigError(f"profile coefficient must be positive, got {self.c}")
        if not np.isfinite(self.theta):
            raise ConfigError(f"profile exponent must be finite, got {self.theta}")

    @property
    def is_constant(self) -> bool:
        return self.theta == 0.0

    def __call__(self, t):
        return weight_eval(self, t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return self.c * self.theta * (1.0 + t) ** (self.theta - 1.0)


def weight_eval(profile: PowerProfile, t):
    """Evaluate ``profile`` at time(s) ``t >= 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError(f"weight profiles are defined for t >= 0, got {t}")
    if profile.theta == 0.0:
        out = np.full_like(t_arr, profile.c)
    else:
        out = profile.c * (1.0 + t_arr) ** profile.theta
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WeightProfiles:
    """Weights lambda, alpha and the structural functions delta, eta, j.

    ``None`` for delta/eta/j means "estimate empirically" (see
    :mod:`dnlab.assumptions`).
    """

    lam: PowerProfile = field(default_factory=PowerProfile)
    alpha: PowerProfile = field(default_factory=PowerProfile)
    delta: Optional[PowerProfile] = None
    eta: Optional[PowerProfile] = None
    j: Optional[PowerProfile] = None

    def with_empirical(self, delta=None, eta=None, j=None) -> "WeightProfiles":
        """Fill the empirical slots, keeping explicitly configured profiles."""
        return WeightProfiles(
            lam=self.lam,
            alpha=self.alpha,
            delta=self.delta if self.delta is not None else delta,
            eta=self.eta if self.eta is not None else eta,
            j=self.j if self.j is not None else j,
        )


SPATIAL_SHAPES = ("uniform", "bump")


@dataclass(frozen=True)
class DampingProfile:
    """Damping coefficient ``b(t, x) = b0 * s(x) * (1 + t)**temporal_sigma``.

    ``s`` is 1 for ``uniform`` and a compactly supported raised cosine of
    half-width ``width`` around ``center`` for ``bump``.
    """

    b0: float = 1.0
    spatial: str = "uniform"
    temporal_sigma: float = 0.0
    center: float = 0.5
    width: float = 0.25

    def __post_init__(self):
        if not (self.b0 >= 0 and np.isfinite(self.b0)):
            raise ConfigError(f"damping.b0 must be >= 0, got {self.b0}")
        if self.spatial not in SPATIAL_SHAPES:
            raise ConfigError(
                f"damping.spatial must be one of {SPATIAL_SHAPES}, got {self.spatial!r}")
        if self.spatial == "bump" and not self.width > 0:
            raise ConfigError(f"damping.width must be positive, got {self.width}")

    def shape(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.spatial == "uniform":
            return np.ones_like(x)
        z = (x - self.center) / self.width
        return np.where(np.abs(z) < 1.0, 0.5 * (1.0 + np.cos(np.pi * z)), 0.0)

    def temporal(self, t: float) -> float:
        return (1.0 + t) ** self.temporal_sigma

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.b0 * self.temporal(t) * self.shape(x)

    def sup(self, t) -> float:
        """``max_x b(t, x)``; the bump peaks at 1."""
        return self.b0 * np.asarray(1.0 + np.asarray(t, dtype=float)) ** self.temporal_sigma


INITIAL_SHAPES = ("zero", "sine", "odd", "bump")


def initial_profile(tag: str, x: np.ndarray, length: float) -> np.ndarray:
    """Named initial profiles, all vanishing at both ends of the interval.

    ``sine`` is the lowest Dirichlet mode, ``odd`` the second one (odd about
    the midpoint), ``bump`` a smooth compactly supported pulse at the centre.
    """
    x = np.asarray(x, dtype=float)
    if tag == "zero":
        return np.zeros_like(x)
    if tag == "sine":
        return np.sin(np.pi * x / length)
    if tag == "odd":
        return np.sin(2.0 * np.pi * x / length)
    if tag == "bump":
        z = (x - 0.5 * length) / (0.1 * length)
        return np.where(np.abs(z) < 1.0, np.cos(0.5 * np.pi * z) ** 4, 0.0)
    raise ConfigError(f"unknown initial profile {tag!r}; expected one of {INITIAL_SHAPES}")


@dataclass(frozen=True)
class InitialData:
    psi: str = "sine"
    phi: str = "zero"
    amplitude: float = 1.0

    def __post_init__(self):
        for name in (self.psi, self.phi):
            if name not in INITIAL_SHAPES:
                raise ConfigError(
                    f"unknown initial profile {name!r}; expected one of {INITIAL_SHAPES}")
        if not np.isfinite(self.amplitude):
            raise ConfigError("initial.amplitude must be finite")


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-12
    max_iter: int = 50
    backtrack: float = 0.5
    max_halvings: int = 20

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"newton.tol must be positive, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ConfigError(f"newton.max_iter must be an integer >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class ProblemSpec:
    grid: Grid = field(default_factory=lambda: Grid(n=200))
    exponents: Exponents = field(default_factory=Exponents)
    a: float = 1.0
    damping: DampingProfile = field(default_factory=DampingProfile)
    weights: WeightProfiles = field(default_factory=WeightProfiles)
    initial: InitialData = field(default_factory=InitialData)
    dt: float = 1e-3
    t_end: float = 20.0
    eps_reg: float = 1e-8
    newton: NewtonSettings = field(default_factory=NewtonSettings)

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}")
        if not self.dt > 0:
            raise ConfigError(f"time.dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise ConfigError(f"time.t_end must be >= 0, got {self.t_end}")
        if not self.eps_reg >= 0:
            raise ConfigError(f"eps_reg must be >= 0, got {self.eps_reg}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def damping_at(self, t: float) -> np.ndarray:
        return self.damping(t, self.grid.nodes)


@dataclass
class State:
    t: float
    u: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.u.shape != self.w.shape or self.u.ndim != 1:
            raise ValueError("u and w must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.w))):
            raise FloatingPointError(f"non-finite state at t={self.t}")

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.w.copy())


def initial_state(spec: ProblemSpec) -> State:
    """Rest-frame initial data: ``u = psi``, ``w = P(phi)``."""
    from .operators import p_apply

    x = spec.grid.nodes
    amp = spec.initial.amplitude
    u0 = amp * initial_profile(spec.initial.psi, x, spec.grid.length)
    v0 = amp * initial_profile(spec.initial.phi, x, spec.grid.length)
    return State(0.0, u0, p_apply(v0, spec.exponents.ell, 0.0))


@dataclass
class Trajectory:
    """Per-step scalar record of one run plus sparse state snapshots.

    Row ``k`` describes the state after ``k`` macro steps. ``dissipation``
    and ``numerical_dissipation`` at row ``k`` are the amounts released by
    the step that produced it (both zero on row 0).
    """

    spec: ProblemSpec
    t: np.ndarray
    energy: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    dissipation: np.ndarray
    numerical_dissipation: np.ndarray
    step_residual: np.ndarray
    cross: np.ndarray
    newton_iters: np.ndarray
    snapshots: dict = field(default_factory=dict)
    status: str = "completed"
    retries: int = 0

    def __post_init__(self):
        if self.t.size and self.t[0] != 0.0:
            raise ValueError("trajectories start at t = 0")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.t.size

    @property
    def final_state(self) -> State:
        return self.snapshots[max(self.snapshots)]

    def truncated(self, t_max: float) -> "Trajectory":
        """Prefix of the record with ``t <= t_max``."""
        k = int(np.searchsorted(self.t, t_max * (1 + 1e-12), side="right"))
        cut = {i: s for i, s in self.snapshots.items() if i < k}
        return Trajectory(
            spec=self.spec, t=self.t[:k], energy=self.energy[:k], kinetic=self.kinetic[:k],
            potential=self.potential[:k], dissipation=self.dissipation[:k],
            numerical_dissipation=self.numerical_dissipation[:k],
            step_residual=self.step_residual[:k], cross=self.cross[:k],
            newton_iters=self.newton_iters[:k], snapshots=cut, status=self.status,
            retries=self.retries)
