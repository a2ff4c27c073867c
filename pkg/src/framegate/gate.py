"""Producer-consumer gate between the game loop and each player's transport handler.

One slot per player.  The loop publishes a view and blocks in await_action;
the transport handler exposes the view to its consumer (next_view) and feeds
the reply back (submit_action).  The gate owns the per-frame timer: it starts
when a view is published, before any serialization, and stops when the action
arrives, after deserialization.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

from .errors import GateAborted, GateProtocolError, MeasurementError
from .game import ActionCommand, PlayerGameData, parse_action

NS_PER_MS = 1_000_000


class GateMode(Enum):
    LOCKSTEP = "lockstep"  # wait for the action no matter how long it takes
    DEADLINE = "deadline"  # substitute NEUTRAL once the budget elapses


class Outcome(Enum):
    HIT = "HIT"
    MISS = "MISS"


@dataclass(frozen=True)
class LatencySample:
    frame_index: int
    latency_ms: float
    outcome: Outcome


@dataclass(frozen=True)
class SubmitOutcome:
    stale: bool = False
    duplicate: bool = False
    unknown_action: bool = False


@dataclass(frozen=True)
class GateResult:
    action: ActionCommand
    sample: LatencySample
    raw_action: str | None  # the submitted string before parsing; None on deadline substitution


def ns_to_ms(nanoseconds: int) -> Fraction:
    """Exact division by one million; ns_to_ms(x) * 1_000_000 == x for any int."""
    if nanoseconds < 0:
        raise MeasurementError(f"negative nanoseconds: {nanoseconds}")
    return Fraction(nanoseconds, NS_PER_MS)


def classify(latency_ms: float, budget_ms: float) -> Outcome:
    """MISS iff the latency strictly exceeds the budget; equality is a HIT."""
    if latency_ms < 0:
        raise MeasurementError(f"negative latency: {latency_ms}")
    return Outcome.MISS if latency_ms > budget_ms else Outcome.HIT


class _Slot:
    __slots__ = (
        "cond", "pending_view", "published_ns", "submitted_ns",
        "raw_action", "parsed_action", "seq", "stream_view", "aborted",
    )

    def __init__(self):
        self.cond = threading.Condition()
        self.pending_view: PlayerGameData | None = None
        self.published_ns = 0
        self.submitted_ns = 0
        self.raw_action: str | None = None
        self.parsed_action: ActionCommand | None = None
        self.seq = 0  # publish counter; consumers track the last seq they saw
        self.stream_view: PlayerGameData | None = None
        self.aborted: str | None = None


class FrameGate:
    """Single-in-flight-view gate for two player slots."""

    def __init__(self):
        self._slots = {1: _Slot(), 2: _Slot()}
        self._closed = threading.Event()
        self._counter_lock = threading.Lock()
        self.stale_inputs = 0
        self.duplicate_inputs = 0
        self.unknown_actions = 0

    def _slot(self, player_slot: int) -> _Slot:
        try:
            return self._slots[player_slot]
        except KeyError:
            raise GateProtocolError(f"no such player slot: {player_slot}") from None

    def publish(self, player_slot: int, view: PlayerGameData) -> None:
        """Make a view observable to the slot's consumer and start its frame timer."""
        s = self._slot(player_slot)
        with s.cond:
            if s.aborted:
                raise GateAborted(player_slot, s.aborted)
            if s.pending_view is not None:
                raise GateProtocolError(
                    f"slot {player_slot}: view already pending (double publish)"
                )
            s.pending_view = view
            s.raw_action = None
            s.parsed_action = None
            s.published_ns = time.monotonic_ns()
            s.seq += 1
            s.stream_view = view
            s.cond.notify_all()

    def next_view(self, player_slot: int, after_seq: int) -> tuple[int, PlayerGameData] | None:
        """Consumer side: block until a view newer than after_seq arrives.

        Returns None once the gate is closed and no newer view remains;
        raises GateAborted if the slot was aborted.
        """
        s = self._slot(player_slot)
        with s.cond:
            while True:
                if s.aborted:
                    raise GateAborted(player_slot, s.aborted)
                if s.seq > after_seq:
                    return s.seq, s.stream_view
                if self._closed.is_set():
                    return None
                s.cond.wait(0.1)

    def submit_action(self, player_slot: int, action_text: str) -> SubmitOutcome:
        """Record the consumer's reply and stop the frame timer.

        Submissions with no pending view, and second submissions for the same
        view, are counted and discarded; the game loop is never disturbed.
        """
        s = self._slot(player_slot)
        with s.cond:
            if s.pending_view is None:
                with self._counter_lock:
                    self.stale_inputs += 1
                return SubmitOutcome(stale=True)
            if s.raw_action is not None:
                with self._counter_lock:
                    self.stale_inputs += 1
                    self.duplicate_inputs += 1
                return SubmitOutcome(stale=True, duplicate=True)
            s.submitted_ns = time.monotonic_ns()
            s.raw_action = action_text
            s.parsed_action, known = parse_action(action_text)
            if not known:
                with self._counter_lock:
                    self.unknown_actions += 1
            s.cond.notify_all()
            return SubmitOutcome(unknown_action=not known)

    def await_action(self, player_slot: int, mode: GateMode, budget_ms: float) -> GateResult:
        """Producer side: block for the frame's action and classify its latency.

        LOCKSTEP returns the submitted action however late it arrives;
        DEADLINE substitutes NEUTRAL once budget_ms has elapsed.  Either way
        the sample is a MISS iff the measured latency exceeds the budget.
        """
        s = self._slot(player_slot)
        with s.cond:
            if s.pending_view is None:
                raise GateProtocolError(f"slot {player_slot}: await without a published view")
            deadline_ns = s.published_ns + int(budget_ms * NS_PER_MS)
            while s.raw_action is None and not s.aborted:
                if mode is GateMode.LOCKSTEP:
                    s.cond.wait()
                else:
                    remaining = deadline_ns - time.monotonic_ns()
                    if remaining <= 0:
                        break
                    s.cond.wait(remaining / 1e9)
            if s.aborted:
                raise GateAborted(player_slot, s.aborted)

            frame_index = s.pending_view.frame_index
            if s.raw_action is None:
                end_ns = time.monotonic_ns()  # deadline expired with no reply
                action, raw = ActionCommand.NEUTRAL, None
            else:
                end_ns = s.submitted_ns
                action, raw = s.parsed_action, s.raw_action
            latency_ms = float(ns_to_ms(end_ns - s.published_ns))
            if mode is GateMode.DEADLINE and latency_ms > budget_ms:
                action = ActionCommand.NEUTRAL
            sample = LatencySample(frame_index, latency_ms, classify(latency_ms, budget_ms))

            s.pending_view = None
            s.raw_action = None
            s.parsed_action = None
            return GateResult(action=action, sample=sample, raw_action=raw)

    def abort(self, player_slot: int, reason: str) -> None:
        """Mark a slot dead; pending await_action/next_view calls raise GateAborted."""
        s = self._slot(player_slot)
        with s.cond:
            s.aborted = reason
            s.cond.notify_all()

    def close(self) -> None:
        """Signal game end; consumers drain any unseen view, then next_view returns None."""
        self._closed.set()
        for s in self._slots.values():
            with s.cond:
                s.cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed.is_set()
