"""Simulation and verification laboratory for the symmetric simple
exclusion process with slow boundary reservoirs."""

from .lattice import (BondEvent, Configuration, Parameters, Regime,
                      apply_event, bernoulli_sample, classify_regime,
                      jump_rates, new_parameters)
from .ratetree import RateIndex
from .kmc import (EnsembleResult, InitSpec, TrajectoryRecord,
                  empirical_density_profile, run_ensemble, run_trajectory,
                  time_averaged_profile)
from .pde import (DensityField, SpectralBasis, TestFunction, discrete_operators,
                  eigenbasis, hydrostatic_profile, semigroup_apply, solve_heat)
from .fluct import (FluctuationSeries, GaussianityReport, MartingaleSeries,
                    covariance_estimator, dynkin_martingale, fluctuation_field,
                    fluctuation_series, gamma_term, initial_gaussianity,
                    martingale_ensemble, predicted_qv, replacement_moment)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .harness import run_experiment

__version__ = "0.1.0"

__all__ = [
    "BondEvent", "Configuration", "Parameters", "Regime", "apply_event",
    "bernoulli_sample", "classify_regime", "jump_rates", "new_parameters",
    "RateIndex", "EnsembleResult", "InitSpec", "TrajectoryRecord",
    "empirical_density_profile", "run_ensemble", "run_trajectory",
    "time_averaged_profile", "DensityField", "SpectralBasis", "TestFunction",
    "discrete_operators", "eigenbasis", "hydrostatic_profile",
    "semigroup_apply", "solve_heat", "FluctuationSeries", "GaussianityReport",
    "MartingaleSeries", "covariance_estimator", "dynkin_martingale",
    "fluctuation_field", "fluctuation_series", "gamma_term",
    "initial_gaussianity", "martingale_ensemble", "predicted_qv",
    "replacement_moment", "ConfigError", "ExperimentConfig", "load_config",
    "parse_config", "run_experiment",
]
