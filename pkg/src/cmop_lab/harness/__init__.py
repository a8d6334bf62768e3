"""Configuration, experiment drivers, output writers and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .emit import RunOutput, emit
from .suites import (
    COMMANDS,
    SolverFailure,
    run_bistability_sweep,
    run_convexity_diagnostic,
    run_divergence_suite,
    run_grid_comparison,
)

__all__ = [
    "COMMANDS",
    "ConfigError",
    "ExperimentConfig",
    "RunOutput",
    "SolverFailure",
    "emit",
    "load_config",
    "parse_config",
    "run_bistability_sweep",
    "run_convexity_diagnostic",
    "run_divergence_suite",
    "run_grid_comparison",
]
