"""gRPC game server: session registry, the three service methods, and a CLI.

Initialize claims a player slot and returns a fresh session id.  Participate
streams the per-player views for one game; the game starts once every expected
player is streaming.  Input hands the chosen action to the frame gate and is
acknowledged after the hand-off, before the frame advances.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import threading
import uuid
from dataclasses import dataclass

from . import proto
from .errors import SlotTakenError
from .game import GameConfig
from .gate import GateMode
from .grpclite import LiteServer, StatusCode
from .loop import GameRunner
from .rpc import frame_gate_methods
from .wire import view_to_proto

log = logging.getLogger(__name__)

DEFAULT_PORT = 50051
PORT_ENV_VAR = "FRAMEGATE_PORT"


@dataclass
class Session:
    player_uuid: str
    slot: int
    name: str
    blind: bool
    streaming: bool = False


class SessionRegistry:
    """uuid -> session map; slot claims are delegated to the runner."""

    def __init__(self, runner: GameRunner):
        self._runner = runner
        self._lock = threading.Lock()
        self._by_uuid: dict[str, Session] = {}

    def create(self, player_number: bool, name: str, blind: bool) -> Session:
        slot = 1 if player_number else 2
        self._runner.claim_slot(slot, name, blind)  # raises SlotTakenError
        session = Session(player_uuid=str(uuid.uuid4()), slot=slot, name=name, blind=blind)
        with self._lock:
            self._by_uuid[session.player_uuid] = session
        return session

    def get(self, player_uuid: str) -> Session | None:
        with self._lock:
            return self._by_uuid.get(player_uuid)

    def drop(self, session: Session) -> None:
        with self._lock:
            self._by_uuid.pop(session.player_uuid, None)
        self._runner.release_slot(session.slot)


class FrameGateServicer:
    def __init__(self, runner: GameRunner):
        self.runner = runner
        self.registry = SessionRegistry(runner)
        self._wire_cache: tuple | None = None

    def _wire_view(self, view) -> bytes:
        """Serialize a view once per frame; both players stream the same object."""
        cached = self._wire_cache
        if cached is not None and cached[0] is view:
            return cached[1]
        data = view_to_proto(view).SerializeToString()
        self._wire_cache = (view, data)
        return data

    def Initialize(self, request, context):
        if not request.player_name:
            context.abort(StatusCode.INVALID_ARGUMENT, "player_name must be non-empty")
        try:
            session = self.registry.create(request.player_number, request.player_name,
                                           request.blind)
        except SlotTakenError as exc:
            context.abort(StatusCode.ALREADY_EXISTS, f"SLOT_TAKEN: {exc}")
        log.info("initialized %s as player %d (blind=%s)",
                 session.name, session.slot, session.blind)
        return proto.InitializeResponse(player_uuid=session.player_uuid)

    def Participate(self, request, context):
        session = self.registry.get(request.player_uuid)
        if session is None:
            context.abort(StatusCode.NOT_FOUND, "NOT_FOUND: unknown player_uuid")
        if session.streaming:
            context.abort(StatusCode.FAILED_PRECONDITION,
                          "ALREADY_STREAMING: duplicate Participate for this session")
        session.streaming = True

        runner = self.runner
        cancelled = threading.Event()
        context.add_callback(cancelled.set)
        context.add_callback(lambda: runner.consumer_lost(session.slot))
        # Views are serialized and written by the game-loop thread itself; this
        # handler only opens the stream and waits for the game to finish.
        runner.attach_view_sink(
            session.slot,
            lambda view: context.send_message_bytes(self._wire_view(view)))
        runner.mark_streaming(session.slot)
        try:
            while not runner.finished.wait(0.2):
                if cancelled.is_set():
                    if not runner.started.is_set():
                        # Pre-game disconnect: free the slot and forget the
                        # session so a restarted agent can register again.
                        self.registry.drop(session)
                    return
            if runner.result.error and not cancelled.is_set():
                context.abort(StatusCode.ABORTED, f"game aborted: {runner.result.error}")
        finally:
            session.streaming = False

    def Input(self, request, context):
        session = self.registry.get(request.player_uuid)
        if session is None:
            context.abort(StatusCode.NOT_FOUND, "NOT_FOUND: unknown player_uuid")
        outcome = self.runner.gate.submit_action(session.slot, request.action)
        return proto.InputAck(stale=outcome.stale, unknown_action=outcome.unknown_action)


class FrameGateServer:
    """Owns the listening endpoint; port 0 binds an ephemeral port (see .port)."""

    def __init__(self, runner: GameRunner, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        self.runner = runner
        self.servicer = FrameGateServicer(runner)
        self._server = LiteServer(host=host, port=port)
        self._server.add_service(proto.SERVICE_NAME, frame_gate_methods(self.servicer))
        self.host = host
        self.port = self._server.port

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> FrameGateServer:
        self._server.start()
        return self

    def stop(self, grace: float | None = 1.0) -> None:
        self._server.stop()


def default_port() -> int:
    return int(os.environ.get(PORT_ENV_VAR, DEFAULT_PORT))


def add_game_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--frames", type=int, default=3600, help="frames per game")
    parser.add_argument("--frame-delay", type=int, default=15)
    parser.add_argument("--budget-ms", type=float, default=16.66)
    parser.add_argument("--audio-bytes", type=int, default=8000)
    parser.add_argument("--screen-bytes", type=int, default=153600)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mode", choices=["lockstep", "deadline"], default="lockstep")
    parser.add_argument("--solo", action="store_true",
                        help="start with one player; the other slot plays NEUTRAL")
    parser.add_argument("--warmup-frames", type=int, default=0)


def config_from_args(args) -> GameConfig:
    return GameConfig(
        frames_per_game=args.frames,
        frame_delay=args.frame_delay,
        budget_ms=args.budget_ms,
        audio_payload_bytes=args.audio_bytes,
        screen_payload_bytes=args.screen_bytes,
        seed=args.seed,
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="framegate-server",
                                     description="Serve one game over gRPC, then exit.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=None,
                        help=f"listen port (default ${PORT_ENV_VAR} or {DEFAULT_PORT})")
    add_game_args(parser)
    parser.add_argument("--report-json", help="write action log, samples and result here")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    runner = GameRunner(
        config=config_from_args(args),
        mode=GateMode(args.mode),
        solo=args.solo,
        warmup_frames=args.warmup_frames,
    )
    server = FrameGateServer(runner, host=args.host,
                             port=args.port if args.port is not None else default_port())
    server.start()
    print(f"listening on {server.address}", flush=True)
    runner.wait_finished()
    server.stop()

    if args.report_json:
        report = {
            "completed": runner.result.completed,
            "error": runner.result.error,
            "frames_played": runner.result.frames_played,
            "final_state_hash": runner.result.final_state_hash,
            "stale_inputs": runner.gate.stale_inputs,
            "duplicate_inputs": runner.gate.duplicate_inputs,
            "action_log": [[e.frame_index, *e.actions] for e in runner.action_log],
            "samples": {
                str(slot): [[s.frame_index, s.latency_ms, s.outcome.value] for s in samples]
                for slot, samples in runner.samples.items()
            },
        }
        with open(args.report_json, "w") as fh:
            json.dump(report, fh)
    if runner.result.error:
        log.error("game ended with error: %s", runner.result.error)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
