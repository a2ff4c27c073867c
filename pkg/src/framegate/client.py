"""Client SDK: register, consume the view stream, submit one action per view.

Includes the rule-based kick agent used by the bench and a scripted agent
helper for determinism tests.
"""

from __future__ import annotations

import argparse
import json
import logging
import select
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

from . import proto
from .errors import ConnectError, SlotTakenError
from .game import PlayerGameData
from .grpclite import LiteChannel, RpcError, StatusCode
from .rpc import PATH_INPUT, FrameGateStub
from .wire import view_from_proto

log = logging.getLogger(__name__)

AgentCallback = Callable[[PlayerGameData], str]


@dataclass
class RunSummary:
    frames_handled: int = 0
    callback_errors: int = 0
    stale_acks: int = 0
    unknown_action_acks: int = 0
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "frames_handled": self.frames_handled,
            "callback_errors": self.callback_errors,
            "stale_acks": self.stale_acks,
            "unknown_action_acks": self.unknown_action_acks,
            "error": self.error,
        }


@dataclass
class AgentSession:
    address: str
    player_uuid: str
    slot: int
    name: str
    blind: bool
    channel: LiteChannel = field(repr=False)
    stub: FrameGateStub = field(repr=False)

    def close(self) -> None:
        self.channel.close()


def connect_and_register(address: str, player_number: int | bool, name: str,
                         blind: bool = False, timeout: float = 10.0) -> AgentSession:
    """Open a channel and claim a player slot; returns a session ready to participate."""
    is_player_one = player_number is True or player_number == 1
    try:
        channel = LiteChannel(address, connect_timeout=timeout)
    except RpcError as exc:
        raise ConnectError(exc.details()) from None
    stub = FrameGateStub(channel)
    request = proto.InitializeRequest(player_number=is_player_one, player_name=name,
                                      blind=blind)
    try:
        response = stub.Initialize(request, timeout=timeout)
    except RpcError as exc:
        channel.close()
        code = exc.code()
        if code is StatusCode.ALREADY_EXISTS:
            raise SlotTakenError(exc.details()) from None
        if code is StatusCode.INVALID_ARGUMENT:
            raise ValueError(exc.details()) from None
        raise ConnectError(f"cannot reach {address}: {code.name}") from None
    return AgentSession(
        address=address,
        player_uuid=response.player_uuid,
        slot=1 if is_player_one else 2,
        name=name,
        blind=blind,
        channel=channel,
        stub=stub,
    )


def run_agent(session: AgentSession, agent: AgentCallback) -> RunSummary:
    """Consume the stream, calling the agent exactly once per view.

    Agent exceptions are mapped to NEUTRAL so a buggy agent cannot stall a
    lockstep server.  Returns once the stream closes; a mid-game transport
    error yields a partial summary with the cause recorded.
    """
    summary = RunSummary()
    request = proto.ParticipateRequest(player_uuid=session.player_uuid)
    input_cache: dict[str, object] = {}
    try:
        for message in session.stub.Participate(request):
            view = view_from_proto(message)
            try:
                action = agent(view)
                action = action.value if hasattr(action, "value") else str(action)
            except Exception:  # noqa: BLE001 - agent bugs must not stall the game
                summary.callback_errors += 1
                action = "NEUTRAL"
            msg = input_cache.get(action)
            if msg is None:
                msg = proto.PlayerActionMessage(player_uuid=session.player_uuid,
                                                action=action)
                input_cache[action] = msg
            ack = session.stub.Input(msg)
            summary.frames_handled += 1
            if ack.stale:
                summary.stale_acks += 1
            if ack.unknown_action:
                summary.unknown_action_acks += 1
    except RpcError as exc:
        summary.error = f"{exc.code().name}: {exc.details()}"
        log.warning("stream ended abnormally: %s", summary.error)
    return summary


class _AgentTask:
    """One session's cooperative state inside run_agents."""

    def __init__(self, session: AgentSession, agent: AgentCallback):
        self.session = session
        self.agent = agent
        self.summary = RunSummary()
        self.stream = session.stub.Participate(
            proto.ParticipateRequest(player_uuid=session.player_uuid))
        self.begin_input = session.channel.unary_unary_deferred(
            PATH_INPUT, proto.PlayerActionMessage.SerializeToString,
            proto.InputAck.FromString)
        self.pending_acks: list = []
        self.msg_cache: dict[str, object] = {}
        self.done = False

    def _fail(self, exc: RpcError) -> None:
        self.summary.error = f"{exc.code().name}: {exc.details()}"
        log.warning("session for player %d ended abnormally: %s",
                    self.session.slot, self.summary.error)
        self.done = True

    def _collect_acks(self) -> None:
        while self.pending_acks:
            ack = self.pending_acks[0].poll()
            if ack is None:
                return
            self.pending_acks.pop(0)
            if ack.stale:
                self.summary.stale_acks += 1
            if ack.unknown_action:
                self.summary.unknown_action_acks += 1

    def step(self, socket_ready: bool = True) -> None:
        """Pump available frames: handle views, submit inputs, resolve acks."""
        self.session.channel.pump_available(socket_ready)
        try:
            self._collect_acks()
            while True:
                item = self.stream.poll()
                if item is None:
                    return
                if item is self.stream.END:
                    break
                view = view_from_proto(item)
                try:
                    action = self.agent(view)
                    action = action.value if hasattr(action, "value") else str(action)
                except Exception:  # noqa: BLE001 - agent bugs must not stall the game
                    self.summary.callback_errors += 1
                    action = "NEUTRAL"
                msg = self.msg_cache.get(action)
                if msg is None:
                    msg = proto.PlayerActionMessage(
                        player_uuid=self.session.player_uuid, action=action)
                    self.msg_cache[action] = msg
                self.pending_acks.append(self.begin_input(msg))
                self.summary.frames_handled += 1
            # Stream over: drain outstanding acks.
            deadline = time.monotonic() + 5.0
            while self.pending_acks and time.monotonic() < deadline:
                self._collect_acks()
                if self.pending_acks:
                    self.session.channel._pump(deadline)
            self.done = True
        except RpcError as exc:
            self._fail(exc)


def run_agents(pairs: list[tuple[AgentSession, AgentCallback]]) -> list[RunSummary]:
    """Run several agent sessions as cooperative tasks on the calling thread.

    Each session keeps its own connection and state machine; the driver pumps
    whichever connection has data.  Per-session semantics match run_agent,
    except that input acknowledgements are collected asynchronously.
    """
    tasks = [_AgentTask(session, agent) for session, agent in pairs]
    while True:
        live = [t for t in tasks if not t.done]
        if not live:
            break
        ready, _, _ = select.select([t.session.channel for t in live], [], [], 0.5)
        ready_set = set(ready)
        for task in live:
            task.step(task.session.channel in ready_set)
    return [t.summary for t in tasks]


def kick_agent(view: PlayerGameData) -> str:
    """The rule-based agent: kicks regardless of what it observes."""
    return "KICK"


def scripted_agent(script: Mapping[int, str], default: str = "NEUTRAL") -> AgentCallback:
    """Agent replaying actions keyed by frame index, for deterministic replays."""

    def agent(view: PlayerGameData) -> str:
        return script.get(view.frame_index, default)

    return agent


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agent", description="FrameGate client agent")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the kick agent against a server")
    run.add_argument("--address", required=True, help="host:port of the game server")
    run.add_argument("--player", type=int, choices=[1, 2], required=True)
    run.add_argument("--name", required=True)
    run.add_argument("--blind", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    session = connect_and_register(args.address, args.player, args.name, blind=args.blind)
    try:
        summary = run_agent(session, kick_agent)
    finally:
        session.close()
    print(json.dumps(summary.as_dict()))
    return 0 if summary.error is None else 1


if __name__ == "__main__":
    raise SystemExit(main())
