"""Syntax-unit localization toolkit."""

from synloc._core import (
    Benchmark,
    ConfigError,
    DataError,
    Error,
    LanguageModel,
    MinimalPair,
    NumericError,
    Phenomenon,
    expected_random_overlap,
    least_squares,
    load_benchmark,
    pearson_r,
    random_overlap_stddev,
    run_cli,
    target_count,
    welch_t,
)

__all__ = [
    "Benchmark",
    "ConfigError",
    "DataError",
    "Error",
    "LanguageModel",
    "MinimalPair",
    "NumericError",
    "Phenomenon",
    "expected_random_overlap",
    "least_squares",
    "load_benchmark",
    "pearson_r",
    "random_overlap_stddev",
    "run_cli",
    "target_count",
    "welch_t",
]
