"""Benchmark orchestration: boot a transport, play full games, collect samples.

The server, game loop, and both agents run as threads in this process; samples
come from the gate's timestamps, so client-side scheduling jitter is part of
the measured quantity.
"""

from __future__ import annotations

import gc
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable

from ..baseline import BaselineConfig, BaselineConnection, serve_baseline
from ..client import (AgentCallback, connect_and_register, kick_agent, run_agent,
                      run_agents)
from ..errors import BenchRunError
from ..game import GameConfig, PlayerGameData
from ..gate import GateMode, LatencySample
from ..loop import GameRunner
from ..server import FrameGateServer
from .stats import BenchReport, compute_stats, emit_csv

log = logging.getLogger(__name__)

WARMUP_FRAMES = 100
GAME_TIMEOUT_S = 300.0


@dataclass
class BenchConfig:
    transport: str = "rpc"  # "rpc" or "baseline"
    games: int = 1
    mode: GateMode = GateMode.LOCKSTEP
    pace: str | None = None  # None (unpaced) or "60fps"
    budget_ms: float = 16.66
    frames_per_game: int = 3600
    frame_delay: int = 15
    audio_bytes: int = 8000
    screen_bytes: int = 153600
    k: int = 8  # baseline accessor calls per frame
    seed: int = 0
    port: int = 0  # 0 = ephemeral
    csv_path: str | None = None
    warmup: bool = True
    solo: bool = False
    measure: str = "p1"  # "p1" or "both"
    agent_factory: Callable[[int], AgentCallback] = field(
        default=lambda slot: kick_agent
    )

    def validate(self) -> BenchConfig:
        if self.games < 1:
            raise ValueError("games must be >= 1")
        if self.transport not in ("rpc", "baseline"):
            raise ValueError(f"unknown transport {self.transport!r}")
        if self.pace not in (None, "60fps"):
            raise ValueError(f"unknown pace {self.pace!r}")
        if self.measure not in ("p1", "both"):
            raise ValueError(f"unknown measure {self.measure!r}")
        return self

    def game_config(self) -> GameConfig:
        return GameConfig(
            frames_per_game=self.frames_per_game,
            frame_delay=self.frame_delay,
            budget_ms=self.budget_ms,
            audio_payload_bytes=self.audio_bytes,
            screen_payload_bytes=self.screen_bytes,
            seed=self.seed,
        )


def _new_runner(cfg: BenchConfig) -> GameRunner:
    return GameRunner(
        config=cfg.game_config(),
        mode=cfg.mode,
        solo=cfg.solo,
        warmup_frames=WARMUP_FRAMES if cfg.warmup else 0,
        pace_s=1.0 / 60.0 if cfg.pace == "60fps" else None,
    )


def _collect(cfg: BenchConfig, runner: GameRunner) -> list[LatencySample]:
    if cfg.measure == "p1" or cfg.solo:
        return list(runner.samples[1])
    paired = zip(runner.samples[1], runner.samples[2])
    return [s for pair in paired for s in pair]


def _run_rpc_game(cfg: BenchConfig) -> list[LatencySample]:
    runner = _new_runner(cfg)
    server = FrameGateServer(runner, port=cfg.port).start()
    errors: list[str] = []
    slots = [1] if cfg.solo else [1, 2]

    def play() -> None:
        sessions = []
        try:
            for slot in slots:
                sessions.append(connect_and_register(server.address, slot,
                                                     f"bench-p{slot}"))
            summaries = run_agents(
                [(session, cfg.agent_factory(session.slot)) for session in sessions])
            for session, summary in zip(sessions, summaries):
                if summary.error:
                    errors.append(f"player {session.slot}: {summary.error}")
        except Exception as exc:  # noqa: BLE001 - reported as a run error
            errors.append(str(exc))
        finally:
            for session in sessions:
                session.close()

    driver = threading.Thread(target=play, name="bench-agents")
    try:
        driver.start()
        if not runner.wait_finished(GAME_TIMEOUT_S):
            raise BenchRunError("game did not finish in time",
                                partial_samples=_collect(cfg, runner))
        driver.join(timeout=30)
    finally:
        server.stop()
    if runner.result.error:
        raise BenchRunError(runner.result.error, partial_samples=_collect(cfg, runner))
    if errors:
        raise BenchRunError("; ".join(errors), partial_samples=_collect(cfg, runner))
    return _collect(cfg, runner)


def _run_baseline_game(cfg: BenchConfig) -> list[LatencySample]:
    runner = _new_runner(cfg)
    server = serve_baseline(runner, BaselineConfig(port=cfg.port,
                                                   accessor_calls_per_frame=cfg.k))
    errors: list[str] = []

    def play(slot: int) -> None:
        try:
            conn = BaselineConnection(server.address, slot, f"bench-p{slot}")
            try:
                conn.run_game(cfg.agent_factory(slot))
            finally:
                conn.close()
        except Exception as exc:  # noqa: BLE001 - reported as a run error
            errors.append(f"player {slot}: {exc}")

    slots = [1] if cfg.solo else [1, 2]
    threads = [threading.Thread(target=play, args=(s,), name=f"bench-baseline-{s}")
               for s in slots]
    try:
        for t in threads:
            t.start()
        if not runner.wait_finished(GAME_TIMEOUT_S):
            raise BenchRunError("game did not finish in time",
                                partial_samples=_collect(cfg, runner))
        for t in threads:
            t.join(timeout=30)
    finally:
        server.stop()
    if runner.result.error:
        raise BenchRunError(runner.result.error, partial_samples=_collect(cfg, runner))
    if errors:
        raise BenchRunError("; ".join(errors), partial_samples=_collect(cfg, runner))
    return _collect(cfg, runner)


def run_benchmark(cfg: BenchConfig) -> BenchReport:
    """Play cfg.games full games and aggregate every measured frame's sample."""
    cfg.validate()
    run_game = _run_rpc_game if cfg.transport == "rpc" else _run_baseline_game
    samples: list[LatencySample] = []
    for game in range(cfg.games):
        gc_was_enabled = gc.isenabled()
        gc.disable()  # keep collector pauses out of the measured frames
        try:
            samples.extend(run_game(cfg))
        except BenchRunError as exc:
            exc.partial_samples = samples + exc.partial_samples
            raise
        finally:
            if gc_was_enabled:
                gc.enable()
            gc.collect()
        log.info("game %d/%d finished (%d samples so far)",
                 game + 1, cfg.games, len(samples))
    report = compute_stats(samples)
    if cfg.csv_path:
        emit_csv(report, cfg.csv_path)
    return report
