"""Experiment orchestration: configuration, sweeps, regressions and persisted runs."""

from .config import RunConfig, load_config, validate
from .experiments import (CSV_COLUMNS, RunResult, SweepReport, amplitude_sweep, build_system,
                          counterexample_regression, counterexample_trajectory, initial_state,
                          run_experiment)

__all__ = ["RunConfig", "load_config", "validate", "CSV_COLUMNS", "RunResult", "SweepReport",
           "amplitude_sweep", "build_system", "counterexample_regression",
           "counterexample_trajectory", "initial_state", "run_experiment"]
