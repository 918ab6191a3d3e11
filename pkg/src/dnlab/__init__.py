"""Structure-preserving simulation of damped doubly nonlinear evolution equations."""

from .analysis import (DecayFit, ExponentialDecay, PowerLawDecay, WindowTooShort, fit_decay,
                       fit_exponential_decay, fit_polynomial_decay, predicted_exponent,
                       tau_integral)
from .assumptions import (AssumptionReport, check_a1_a4, check_b1_b4, estimate_constants,
                          verify_assumptions)
from .config import RunConfig, parse_config
from .energy import balance_residual, check_monotone, total_energy
from .lyapunov import (LyapunovParams, check_g_monotone, equivalence_bounds, g_functional,
                       h_functional, tune_mu)
from .model import (ConfigError, DampingProfile, Exponents, Grid, InitialData, PowerProfile,
                    ProblemSpec, State, Trajectory, WeightProfiles, initial_state)
from .solver import NonConvergence, implicit_step, oracle_run, run_simulation

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "ConfigError", "DampingProfile", "DecayFit", "ExponentialDecay",
    "Exponents", "Grid", "InitialData", "LyapunovParams", "NonConvergence", "PowerLawDecay",
    "PowerProfile", "ProblemSpec", "RunConfig", "State", "Trajectory", "WeightProfiles",
    "WindowTooShort", "balance_residual", "check_a1_a4", "check_b1_b4", "check_g_monotone",
    "check_monotone", "equivalence_bounds", "estimate_constants", "fit_decay",
    "fit_exponential_decay", "fit_polynomial_decay", "g_functional", "h_functional",
    "implicit_step", "initial_state", "oracle_run", "parse_config", "predicted_exponent",
    "run_simulation", "tau_integral", "total_energy", "tune_mu", "verify_assumptions",
]
