"""Python bindings for the Diff-Instruct++ toy lab."""

from ._core import (
    CheckReport,
    ConfigError,
    DimensionError,
    DippError,
    DivergenceError,
    DomainError,
    ExperimentConfig,
    GaussianMixture,
    Generator,
    LoadError,
    ScheduleError,
    UsageError,
    analytic_score,
    default_config,
    energy_distance,
    eval_generator,
    gaussian_kl,
    load_config,
    load_generator,
    parse_config,
    run_align,
    run_all_checks,
    run_distill,
    run_eval,
    run_pretrain_ref,
    sample_times,
    serialize_config,
)

__all__ = [
    "CheckReport",
    "ConfigError",
    "DimensionError",
    "DippError",
    "DivergenceError",
    "DomainError",
    "ExperimentConfig",
    "GaussianMixture",
    "Generator",
    "LoadError",
    "ScheduleError",
    "UsageError",
    "analytic_score",
    "default_config",
    "energy_distance",
    "eval_generator",
    "gaussian_kl",
    "load_config",
    "load_generator",
    "parse_config",
    "run_align",
    "run_all_checks",
    "run_distill",
    "run_eval",
    "run_pretrain_ref",
    "sample_times",
    "serialize_config",
]
