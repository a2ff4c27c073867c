"""Game loop driving the gate: one producer thread serving both player slots.

The loop starts once every expected consumer is streaming (both slots, or one
slot when solo).  Each responsible frame it publishes per-player views, blocks
on the gate for both actions, records samples and the action log, and steps
the game.  An optional warm-up segment plays a throwaway game through the same
publish/await path first; nothing from it is recorded.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

from .errors import GateAborted, SlotTakenError
from .game import (
    ActionCommand,
    GameConfig,
    build_player_view,
    is_over,
    new_game,
    state_hash,
    step,
)
from .gate import FrameGate, GateMode, LatencySample

log = logging.getLogger(__name__)

SLOTS = (1, 2)


@dataclass
class PlayerBinding:
    slot: int
    name: str
    blind: bool
    streaming: bool = False
    lost: bool = False


@dataclass
class FrameLogEntry:
    """One applied frame: the action strings as observed before parsing.

    Built-in opponents and deadline substitutions log the applied command name.
    """

    frame_index: int
    actions: tuple[str, str]


@dataclass
class GameResult:
    completed: bool = False
    error: str | None = None
    frames_played: int = 0
    final_state_hash: str | None = None


@dataclass
class GameRunner:
    config: GameConfig
    mode: GateMode = GateMode.LOCKSTEP
    solo: bool = False
    warmup_frames: int = 0
    pace_s: float | None = None  # seconds per frame; None = unpaced

    gate: FrameGate = field(default_factory=FrameGate)
    result: GameResult = field(default_factory=GameResult)
    samples: dict[int, list[LatencySample]] = field(default_factory=lambda: {1: [], 2: []})
    action_log: list[FrameLogEntry] = field(default_factory=list)

    def __post_init__(self):
        self.config.validate()
        self._bindings: dict[int, PlayerBinding] = {}
        self._sinks: dict[int, object] = {}
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None
        self.started = threading.Event()
        self.finished = threading.Event()

    # -- registration ------------------------------------------------------

    def claim_slot(self, slot: int, name: str, blind: bool) -> PlayerBinding:
        if slot not in SLOTS:
            raise ValueError(f"player slot must be 1 or 2, got {slot}")
        with self._lock:
            if slot in self._bindings:
                raise SlotTakenError(f"player slot {slot} already claimed")
            binding = PlayerBinding(slot=slot, name=name, blind=blind)
            self._bindings[slot] = binding
            return binding

    def release_slot(self, slot: int) -> None:
        """Free a claimed slot; only valid before the game has started."""
        with self._lock:
            if not self.started.is_set():
                self._bindings.pop(slot, None)

    def attach_view_sink(self, slot: int, sink) -> None:
        """Register a callable invoked with each published view, on the loop thread.

        Transports that push views to the consumer directly (the RPC path)
        register a sink; transports that pull use gate.next_view instead.
        """
        with self._lock:
            self._sinks[slot] = sink

    def mark_streaming(self, slot: int) -> None:
        """Called when the slot's consumer stream is up; may start the loop."""
        with self._lock:
            self._bindings[slot].streaming = True
            want = 1 if self.solo else 2
            live = sum(1 for b in self._bindings.values() if b.streaming)
            if live >= want and self._thread is None:
                self._thread = threading.Thread(target=self._run, name="framegate-loop")
                self._thread.start()

    def consumer_lost(self, slot: int) -> None:
        """Consumer stream ended; abort in lockstep, degrade to misses in deadline."""
        if self.finished.is_set():
            return
        with self._lock:
            binding = self._bindings.get(slot)
            if binding is None or not binding.streaming:
                return
            if not self.started.is_set():
                binding.streaming = False
                return
            binding.lost = True
        if self.mode is GateMode.LOCKSTEP:
            self.gate.abort(slot, "consumer disconnected mid-game")

    def wait_finished(self, timeout: float | None = None) -> bool:
        return self.finished.wait(timeout)

    # -- the loop ----------------------------------------------------------

    def _streaming_slots(self) -> list[int]:
        with self._lock:
            return sorted(b.slot for b in self._bindings.values() if b.streaming)

    def _blind(self, slot: int) -> bool:
        with self._lock:
            return self._bindings[slot].blind

    def _run(self) -> None:
        self.started.set()
        try:
            if self.warmup_frames > 0:
                self._play(record=False, max_published=self.warmup_frames)
            frames, final = self._play(record=True)
            self.result.completed = True
            self.result.frames_played = frames
            self.result.final_state_hash = final
        except GateAborted as exc:
            self.result.error = str(exc)
            log.error("game aborted: %s", exc)
        except Exception as exc:  # noqa: BLE001 - surfaced through the result
            self.result.error = f"{type(exc).__name__}: {exc}"
            log.exception("game loop failed")
        finally:
            self.finished.set()
            self.gate.close()

    def _play(self, record: bool, max_published: int | None = None) -> tuple[int, str]:
        cfg = self.config
        state = new_game(cfg)
        active = self._streaming_slots()
        blind = {slot: self._blind(slot) for slot in active}

        for _ in range(cfg.frame_delay):
            step(state, ActionCommand.NEUTRAL, ActionCommand.NEUTRAL)

        published = 0
        pace_origin = time.monotonic()
        while not is_over(state):
            if max_published is not None and published >= max_published:
                break
            snap = state.snapshot()
            by_blind: dict[bool, object] = {}  # identical views shared across slots
            views = {}
            for slot in active:
                if blind[slot] not in by_blind:
                    by_blind[blind[slot]] = build_player_view(snap, blind=blind[slot],
                                                              config=cfg)
                views[slot] = by_blind[blind[slot]]
            for slot in active:
                self.gate.publish(slot, views[slot])
                sink = self._sinks.get(slot)
                if sink is not None:
                    try:
                        sink(views[slot])
                    except Exception as exc:  # noqa: BLE001 - consumer transport died
                        log.warning("view sink for slot %d failed: %s", slot, exc)
                        self.consumer_lost(slot)
            applied: dict[int, ActionCommand] = {}
            logged: dict[int, str] = {}
            for slot in SLOTS:
                if slot in views:
                    result = self.gate.await_action(slot, self.mode, cfg.budget_ms)
                    applied[slot] = result.action
                    logged[slot] = (
                        result.raw_action if result.raw_action is not None
                        else result.action.value
                    )
                    if record:
                        self.samples[slot].append(result.sample)
                else:
                    applied[slot] = ActionCommand.NEUTRAL
                    logged[slot] = ActionCommand.NEUTRAL.value
            if record:
                self.action_log.append(FrameLogEntry(snap.frame_index, (logged[1], logged[2])))
            step(state, applied[1], applied[2])
            published += 1
            if self.pace_s is not None:
                target = pace_origin + published * self.pace_s
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        return published, state_hash(state)
