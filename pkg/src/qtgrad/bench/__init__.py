"""Experiment orchestration: plans, seeded runs, reports and the CLI."""

from .plan import ExperimentPlan, ResultRow, ResultTable, derive_seed, known_methods, run_method, run_plan
from .report import emit_csv, emit_markdown, emit_trace_series, read_csv

__all__ = [
    "ExperimentPlan", "ResultRow", "ResultTable", "derive_seed", "known_methods",
    "run_method", "run_plan", "emit_csv", "emit_markdown", "emit_trace_series", "read_csv",
]
