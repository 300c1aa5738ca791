"""Experiment harness: config, sweeps, model comparison, report files, CLI."""

from .harness import (COMPARE_FIELDS, COMPARE_SCHEMA, REPORT_SCHEMA, CompareError,
                      ExperimentError, compare, emit, parse, predict_point, predictions_for,
                      render, reports_from_rows, run)
from .spec import ConfigError, ExperimentSpec, Point, load_spec, make_points

__all__ = [
    "COMPARE_FIELDS", "COMPARE_SCHEMA", "REPORT_SCHEMA", "CompareError", "ConfigError",
    "ExperimentError", "ExperimentSpec", "Point", "compare", "emit", "load_spec",
    "make_points", "parse", "predict_point", "predictions_for", "render",
    "reports_from_rows", "run",
]
