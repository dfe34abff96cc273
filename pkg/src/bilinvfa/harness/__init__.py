"""Experiment runner, result files and the command line interface."""

from .experiment import (
    BENCHMARKS,
    FIELDS,
    FORMATS,
    METHODS,
    METRICS,
    SUMMARY_FIELDS,
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    compute_metrics,
    emit,
    parse_records,
    run_experiment,
    summarize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
