"""Robust forward performance processes in stochastic factor markets.

Ergodic BSDE solvers on a spatial grid, finite-horizon backward marches,
closed-form robust drivers with grid oracles, and Monte Carlo verification of
self-generation and of the risk-sensitive game value.
"""

from ._accel import NUMBA_ENABLED, backend_name
from .config import ConfigError, ExperimentConfig, load_config
from .drivers import (DriverSpec, UtilityClass, alpha_star, beta_star, driver_G, pi_star, power_driver,
                      running_payoff, section7_driver, u_star)
from .ergodic import (CFLError, ConvergenceError, MarkovianSolutionField, ShiftedGenerator, extract_z,
                      forward_process_value, solve_discounted, solve_ergodic_false_transient,
                      solve_ergodic_vanishing_discount)
from .finite import (ErgodicLimitReport, StepInstabilityError, discounted_forward_diagnostics, ergodic_limit,
                     lower_value, solve_finite_horizon)
from .grid import GridOperators, SpatialGrid
from .market import (FactorModelSpec, MeasureShift, PathEnsemble, constant_theta_model, ou_tanh_model,
                     scalar_theta_model, simulate_factor, simulate_wealth, single_stock_factor_model,
                     validate_assumptions)
from .montecarlo import FeedbackTables, simulate_paths
from .sets import ConvexSet, parse_set
from .verification import (MonteCarloReport, brute_force_G, comparison_check, martingale_check,
                           risk_sensitive_rate, saddle_gap)

__version__ = "0.1.0"

__all__ = [
    "NUMBA_ENABLED", "backend_name", "ConfigError", "ExperimentConfig", "load_config", "DriverSpec",
    "UtilityClass", "alpha_star", "beta_star", "driver_G", "pi_star", "power_driver", "running_payoff",
    "section7_driver", "u_star", "CFLError", "ConvergenceError", "MarkovianSolutionField", "ShiftedGenerator",
    "extract_z", "forward_process_value", "solve_discounted", "solve_ergodic_false_transient",
    "solve_ergodic_vanishing_discount", "ErgodicLimitReport", "StepInstabilityError",
    "discounted_forward_diagnostics", "ergodic_limit", "lower_value", "solve_finite_horizon", "GridOperators",
    "SpatialGrid", "FactorModelSpec", "MeasureShift", "PathEnsemble", "constant_theta_model", "ou_tanh_model",
    "scalar_theta_model", "simulate_factor", "simulate_wealth", "single_stock_factor_model",
    "validate_assumptions", "FeedbackTables", "simulate_paths", "ConvexSet", "parse_set", "MonteCarloReport",
    "brute_force_G", "comparison_check", "martingale_check", "risk_sensitive_rate", "saddle_gap",
]
