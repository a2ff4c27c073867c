"""Bench CLI: `bench run` measures a transport, `bench compare` diffs two CSVs."""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import BenchRunError
from ..gate import GateMode
from .runner import BenchConfig, run_benchmark
from .stats import compute_stats, read_csv


def _add_run_parser(sub) -> None:
    run = sub.add_parser("run", help="run a benchmark and print the report")
    run.add_argument("--transport", choices=["rpc", "baseline"], default="rpc")
    run.add_argument("--games", type=int, default=1)
    run.add_argument("--mode", choices=["lockstep", "deadline"], default="lockstep")
    run.add_argument("--budget-ms", type=float, default=16.66)
    run.add_argument("--port", type=int, default=0, help="0 picks a free port")
    run.add_argument("--k", type=int, default=8,
                     help="baseline accessor calls per frame")
    run.add_argument("--audio-bytes", type=int, default=8000)
    run.add_argument("--screen-bytes", type=int, default=153600)
    run.add_argument("--frames", type=int, default=3600)
    run.add_argument("--frame-delay", type=int, default=15)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--csv", help="write per-frame samples here")
    run.add_argument("--pace", choices=["60fps"], default=None,
                     help="sleep to the frame grid instead of running unpaced")
    run.add_argument("--no-warmup", action="store_true",
                     help="skip the unrecorded warm-up frames")
    run.add_argument("--solo", action="store_true",
                     help="one agent versus a built-in NEUTRAL opponent")
    run.add_argument("--measure", choices=["p1", "both"], default="p1")


def _cmd_run(args) -> int:
    cfg = BenchConfig(
        transport=args.transport,
        games=args.games,
        mode=GateMode(args.mode),
        pace=args.pace,
        budget_ms=args.budget_ms,
        frames_per_game=args.frames,
        frame_delay=args.frame_delay,
        audio_bytes=args.audio_bytes,
        screen_bytes=args.screen_bytes,
        k=args.k,
        seed=args.seed,
        port=args.port,
        csv_path=args.csv,
        warmup=not args.no_warmup,
        solo=args.solo,
        measure=args.measure,
    )
    try:
        report = run_benchmark(cfg)
    except BenchRunError as exc:
        print(f"benchmark failed: {exc} ({len(exc.partial_samples)} partial samples)",
              file=sys.stderr)
        return 1
    print(f"transport={args.transport} games={args.games} mode={args.mode} "
          f"pace={args.pace or 'unpaced'}")
    for line in report.summary_lines():
        print("  " + line)
    if args.csv:
        print(f"  wrote {args.csv}")
    return 0


def _cmd_compare(args) -> int:
    report_a = compute_stats(read_csv(args.csv_a))
    report_b = compute_stats(read_csv(args.csv_b))
    header = (f"{'':12} {'mean_ms':>9} {'max_ms':>9} {'min_ms':>9} {'p50':>8} "
              f"{'p95':>8} {'p99':>8} {'hits':>7} {'misses':>7} {'miss%':>7}")
    print(header)
    for label, r in ((args.csv_a, report_a), (args.csv_b, report_b)):
        print(f"{label[-12:]:12} {r.mean_ms:9.3f} {r.max_ms:9.3f} {r.min_ms:9.3f} "
              f"{r.p50_ms:8.3f} {r.p95_ms:8.3f} {r.p99_ms:8.3f} "
              f"{r.hit_frames:7d} {r.miss_frames:7d} {r.miss_rate_percent:7.2f}")
    reduction = (1.0 - report_a.mean_ms / report_b.mean_ms) * 100.0
    print(f"mean latency reduction (a vs b): {reduction:.2f}%")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bench",
                                     description="FrameGate transport benchmark")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)
    cmp_parser = sub.add_parser("compare", help="compare two sample CSVs")
    cmp_parser.add_argument("--csv-a", required=True)
    cmp_parser.add_argument("--csv-b", required=True)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.WARNING)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_compare(args)


if __name__ == "__main__":
    raise SystemExit(main())
