"""Aggregate statistics over per-frame latency samples, and the CSV format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from statistics import StatisticsError, fmean

from ..gate import LatencySample, Outcome, ns_to_ms

__all__ = ["BenchReport", "compute_stats", "emit_csv", "ns_to_ms", "read_csv"]

CSV_HEADER = ("frame_index", "latency_ms", "outcome")


@dataclass(frozen=True)
class BenchReport:
    samples: tuple[LatencySample, ...]
    mean_ms: float
    max_ms: float
    min_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    hit_frames: int
    miss_frames: int
    miss_rate_percent: float  # rounded to 2 decimal places

    def summary_lines(self) -> list[str]:
        return [
            f"samples {len(self.samples)}  mean {self.mean_ms:.3f} ms  "
            f"min {self.min_ms:.3f}  max {self.max_ms:.3f}",
            f"p50 {self.p50_ms:.3f}  p95 {self.p95_ms:.3f}  p99 {self.p99_ms:.3f}",
            f"hit frames {self.hit_frames}  miss frames {self.miss_frames}  "
            f"miss rate {self.miss_rate_percent:.2f}%",
        ]


def nearest_rank(sorted_values: list[float], percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    rank = max(1, math.ceil(percentile / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


def compute_stats(samples: list[LatencySample]) -> BenchReport:
    if not samples:
        raise StatisticsError("no samples")
    latencies = sorted(s.latency_ms for s in samples)
    misses = sum(1 for s in samples if s.outcome is Outcome.MISS)
    hits = len(samples) - misses
    return BenchReport(
        samples=tuple(samples),
        mean_ms=fmean(latencies),
        max_ms=latencies[-1],
        min_ms=latencies[0],
        p50_ms=nearest_rank(latencies, 50),
        p95_ms=nearest_rank(latencies, 95),
        p99_ms=nearest_rank(latencies, 99),
        hit_frames=hits,
        miss_frames=misses,
        miss_rate_percent=round(100.0 * misses / len(samples), 2),
    )


def emit_csv(report: BenchReport, path: str) -> None:
    """One row per sample, in sample order; floats keep full repr precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for s in report.samples:
            writer.writerow((s.frame_index, repr(s.latency_ms), s.outcome.value))


def read_csv(path: str) -> list[LatencySample]:
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header!r}")
        for frame_index, latency_ms, outcome in reader:
            samples.append(
                LatencySample(int(frame_index), float(latency_ms), Outcome(outcome))
            )
    return samples
