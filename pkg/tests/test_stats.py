"""Bench statistics against an independent brute-force oracle, plus the CSV format."""

import math
from statistics import StatisticsError

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framegate.bench.stats import compute_stats, emit_csv, read_csv
from framegate.gate import LatencySample, Outcome


def sample(frame, latency, miss=False):
    return LatencySample(frame, latency, Outcome.MISS if miss else Outcome.HIT)


def brute_force_report(samples):
    """Independent recomputation: plain loops, no shared code with stats.py."""
    latencies = [s.latency_ms for s in samples]
    ordered = sorted(latencies)
    n = len(ordered)

    def pct(p):
        rank = math.ceil(p / 100 * n)
        return ordered[max(rank, 1) - 1]

    misses = len([s for s in samples if s.outcome is Outcome.MISS])
    return {
        "mean": sum(latencies) / n,
        "max": ordered[-1],
        "min": ordered[0],
        "p50": pct(50),
        "p95": pct(95),
        "p99": pct(99),
        "hits": n - misses,
        "misses": misses,
        "rate": round(100.0 * misses / n, 2),
    }


class TestComputeStats:
    def test_simple_all_hit(self):
        report = compute_stats([sample(0, 1.0), sample(1, 2.0), sample(2, 3.0)])
        assert report.mean_ms == 2.0
        assert report.max_ms == 3.0
        assert report.min_ms == 1.0
        assert report.miss_rate_percent == 0.0
        assert report.hit_frames == 3 and report.miss_frames == 0

    def test_paper_miss_rate_arithmetic(self):
        samples = [sample(i, 1.0, miss=(i < 68)) for i in range(3585)]
        report = compute_stats(samples)
        assert report.miss_frames == 68
        assert report.hit_frames == 3517
        assert report.miss_rate_percent == 1.90
        assert f"{report.miss_rate_percent:.2f}" == "1.90"

    def test_empty_is_statistics_error(self):
        with pytest.raises(StatisticsError):
            compute_stats([])

    def test_percentiles_nearest_rank(self):
        report = compute_stats([sample(i, float(i + 1)) for i in range(100)])
        assert report.p50_ms == 50.0
        assert report.p95_ms == 95.0
        assert report.p99_ms == 99.0

    @given(st.lists(
        st.tuples(st.integers(0, 3599), st.floats(0, 100), st.booleans()),
        min_size=1, max_size=300))
    @settings(max_examples=300, deadline=None)
    def test_matches_brute_force_oracle(self, rows):
        samples = [sample(f, latency, miss) for f, latency, miss in rows]
        report = compute_stats(samples)
        oracle = brute_force_report(samples)
        assert report.mean_ms == pytest.approx(oracle["mean"], abs=0, rel=1e-12)
        assert report.max_ms == oracle["max"]
        assert report.min_ms == oracle["min"]
        assert report.p50_ms == oracle["p50"]
        assert report.p95_ms == oracle["p95"]
        assert report.p99_ms == oracle["p99"]
        assert report.hit_frames == oracle["hits"]
        assert report.miss_frames == oracle["misses"]
        assert report.miss_rate_percent == oracle["rate"]


class TestCsv:
    def test_row_count_and_values(self, tmp_path):
        path = tmp_path / "out.csv"
        report = compute_stats([sample(15, 1.5), sample(16, 2.5, miss=True),
                                sample(17, 0.25)])
        emit_csv(report, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "frame_index,latency_ms,outcome"
        assert lines[2] == "16,2.5,MISS"
        outcomes = {line.split(",")[2] for line in lines[1:]}
        assert outcomes <= {"HIT", "MISS"}

    def test_reemit_is_byte_identical(self, tmp_path):
        report = compute_stats([sample(i, i * 0.123456789) for i in range(50)])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(report, str(a))
        emit_csv(report, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_read_round_trips_samples(self, tmp_path):
        path = tmp_path / "r.csv"
        samples = [sample(1, 1.125), sample(2, 17.0, miss=True)]
        emit_csv(compute_stats(samples), str(path))
        assert read_csv(str(path)) == samples

    def test_unwritable_path_raises(self, tmp_path):
        report = compute_stats([sample(0, 1.0)])
        with pytest.raises(OSError):
            emit_csv(report, str(tmp_path / "missing-dir" / "x.csv"))
