"""Shared fixtures: short game configs and a server+agents harness."""

from __future__ import annotations

import threading

import pytest

from framegate import FrameGateServer, GameConfig, GameRunner
from framegate.client import connect_and_register, run_agent


def small_config(**overrides) -> GameConfig:
    base = dict(frames_per_game=60, frame_delay=5, audio_payload_bytes=256,
                screen_payload_bytes=2048, seed=7)
    base.update(overrides)
    return GameConfig(**base)


class GameHarness:
    """One server plus helper threads for driving agents in tests."""

    def __init__(self, config: GameConfig, **runner_kwargs):
        self.runner = GameRunner(config=config, **runner_kwargs)
        self.server = FrameGateServer(self.runner, port=0).start()
        self.address = self.server.address
        self._threads: list[threading.Thread] = []
        self.summaries: dict[str, object] = {}

    def spawn_agent(self, slot: int, agent, name: str | None = None,
                    blind: bool = False) -> None:
        name = name or f"agent-{slot}"

        def play():
            session = connect_and_register(self.address, slot, name, blind=blind)
            try:
                self.summaries[name] = run_agent(session, agent)
            finally:
                session.close()

        t = threading.Thread(target=play, name=name)
        t.start()
        self._threads.append(t)

    def finish(self, timeout: float = 60.0):
        assert self.runner.wait_finished(timeout), "game did not finish in time"
        for t in self._threads:
            t.join(timeout=15)
        return self.runner

    def stop(self) -> None:
        self.server.stop()


@pytest.fixture
def harness_factory():
    harnesses = []

    def make(config: GameConfig | None = None, **runner_kwargs) -> GameHarness:
        h = GameHarness(config or small_config(), **runner_kwargs)
        harnesses.append(h)
        return h

    yield make
    for h in harnesses:
        h.stop()
