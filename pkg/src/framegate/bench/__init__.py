"""Latency benchmark harness: statistics, game orchestration, and the CLI."""

from .stats import BenchReport, compute_stats, emit_csv, ns_to_ms, read_csv
from .runner import BenchConfig, run_benchmark

__all__ = [
    "BenchConfig",
    "BenchReport",
    "compute_stats",
    "emit_csv",
    "ns_to_ms",
    "read_csv",
    "run_benchmark",
]
