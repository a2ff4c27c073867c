"""Deterministic fixed-timestep mini fighting game: the state the server streams and updates."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError, GameStateError

log = logging.getLogger(__name__)

PUNCH_DAMAGE = 5
PUNCH_RANGE = 80


class ActionCommand(Enum):
    KICK = "KICK"
    PUNCH = "PUNCH"
    GUARD = "GUARD"
    MOVE_LEFT = "MOVE_LEFT"
    MOVE_RIGHT = "MOVE_RIGHT"
    NEUTRAL = "NEUTRAL"


def parse_action(text: str) -> tuple[ActionCommand, bool]:
    """Parse an action string; total: unknown strings map to (NEUTRAL, False)."""
    try:
        return ActionCommand(text.strip().upper()), True
    except ValueError:
        log.warning("unknown action %r, substituting NEUTRAL", text)
        return ActionCommand.NEUTRAL, False


@dataclass(frozen=True)
class GameConfig:
    frames_per_game: int = 3600
    frame_delay: int = 15
    budget_ms: float = 16.66
    arena_width: int = 960
    start_hp: int = 400
    kick_damage: int = 10
    kick_range: int = 120
    move_step: int = 10
    audio_payload_bytes: int = 8000
    screen_payload_bytes: int = 153600
    seed: int = 0

    def validate(self) -> GameConfig:
        if not self.frames_per_game > self.frame_delay >= 0:
            raise ConfigurationError(
                f"need frames_per_game > frame_delay >= 0, "
                f"got {self.frames_per_game} and {self.frame_delay}"
            )
        if self.budget_ms <= 0:
            raise ConfigurationError(f"budget_ms must be positive, got {self.budget_ms}")
        for name in ("arena_width", "start_hp", "kick_damage", "kick_range",
                     "move_step", "audio_payload_bytes", "screen_payload_bytes"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {getattr(self, name)}")
        return self


@dataclass(frozen=True)
class CharacterState:
    hp: int
    x: int
    facing: int  # +1 right, -1 left
    last_action: ActionCommand = ActionCommand.NEUTRAL


@dataclass(frozen=True)
class FrameState:
    frame_index: int
    characters: tuple[CharacterState, CharacterState]


@dataclass(frozen=True)
class PlayerGameData:
    """Per-player view of one frame; blind views carry only the audio payload."""

    frame_index: int
    audio_data: bytes
    frame_data: FrameState | None = None
    screen_data: bytes | None = None


@dataclass
class GameState:
    """Mutable authoritative state; only the game-loop thread may step it."""

    config: GameConfig
    frame_index: int = 0
    characters: list[CharacterState] = field(default_factory=list)

    def snapshot(self) -> FrameState:
        return FrameState(self.frame_index, (self.characters[0], self.characters[1]))


def new_game(config: GameConfig) -> GameState:
    config.validate()
    p1 = CharacterState(hp=config.start_hp, x=config.arena_width // 8, facing=1)
    p2 = CharacterState(hp=config.start_hp, x=7 * config.arena_width // 8, facing=-1)
    return GameState(config=config, characters=[p1, p2])


def is_over(state: GameState) -> bool:
    return state.frame_index >= state.config.frames_per_game or any(
        c.hp <= 0 for c in state.characters
    )


def _attack_damage(action: ActionCommand, config: GameConfig, distance: int) -> int:
    if action is ActionCommand.KICK and distance <= config.kick_range:
        return config.kick_damage
    if action is ActionCommand.PUNCH and distance <= PUNCH_RANGE:
        return PUNCH_DAMAGE
    return 0


def step(state: GameState, a1: ActionCommand, a2: ActionCommand) -> FrameState:
    """Advance one frame: movement for both, then attacks against post-move positions."""
    if is_over(state):
        raise GameStateError(f"game already over at frame {state.frame_index}")

    config = state.config
    actions = (a1, a2)
    positions = []
    for char, action in zip(state.characters, actions):
        x = char.x
        if action is ActionCommand.MOVE_LEFT:
            x -= config.move_step
        elif action is ActionCommand.MOVE_RIGHT:
            x += config.move_step
        positions.append(max(0, min(config.arena_width, x)))

    distance = abs(positions[0] - positions[1])
    new_chars = []
    for i, (char, action) in enumerate(zip(state.characters, actions)):
        other = 1 - i
        damage = _attack_damage(actions[other], config, distance)
        if damage and action is ActionCommand.GUARD:
            damage //= 2
        facing = char.facing
        if positions[other] != positions[i]:
            facing = 1 if positions[other] > positions[i] else -1
        new_chars.append(
            CharacterState(
                hp=max(0, char.hp - damage),
                x=positions[i],
                facing=facing,
                last_action=action,
            )
        )

    state.characters = new_chars
    state.frame_index += 1
    return state.snapshot()


_POOL_ARENA = 1 << 20
_POOL_STRIDE = 7919  # prime, so consecutive frames land on distinct offsets
_pool_cache: dict[tuple[int, int], bytes] = {}


def _payload_pool(seed: int, nbytes: int) -> bytes:
    """Philox-generated pool reused across frames of one seed; built once."""
    key = (seed, nbytes)
    pool = _pool_cache.get(key)
    if pool is None:
        words = np.random.Philox(key=[seed & (2**64 - 1), 0]).random_raw(
            (nbytes + 7) // 8)
        pool = words.tobytes()[:nbytes]
        if len(_pool_cache) > 8:
            _pool_cache.clear()
        _pool_cache[key] = pool
    return pool


def _payload_stream(config: GameConfig, frame_index: int, nbytes: int) -> bytes:
    """Deterministic pseudo-random bytes keyed by (seed, frame_index).

    A fixed Philox pool per seed is sliced at a frame-dependent offset, which
    keeps per-frame payload cost at one memcpy.
    """
    if nbytes == 0:
        return b""
    pool = _payload_pool(config.seed, nbytes + _POOL_ARENA)
    offset = (frame_index * _POOL_STRIDE) % (_POOL_ARENA + 1)
    return pool[offset:offset + nbytes]


def build_player_view(state: FrameState, blind: bool, config: GameConfig) -> PlayerGameData:
    """Build the per-player payload for a frame; frame/screen data are withheld from blind players."""
    audio_bytes = config.audio_payload_bytes
    if blind:
        audio = _payload_stream(config, state.frame_index, audio_bytes)
        return PlayerGameData(frame_index=state.frame_index, audio_data=audio)
    raw = _payload_stream(config, state.frame_index,
                          audio_bytes + config.screen_payload_bytes)
    return PlayerGameData(
        frame_index=state.frame_index,
        audio_data=raw[:audio_bytes],
        frame_data=state,
        screen_data=raw[audio_bytes:],
    )


def state_hash(state: GameState | FrameState) -> str:
    """Stable digest over all state fields; equal states produce equal digests."""
    snap = state.snapshot() if isinstance(state, GameState) else state
    h = hashlib.sha256()
    h.update(str(snap.frame_index).encode())
    for c in snap.characters:
        h.update(f"|{c.hp},{c.x},{c.facing},{c.last_action.value}".encode())
    return h.hexdigest()


__all__ = [
    "ActionCommand",
    "CharacterState",
    "FrameState",
    "GameConfig",
    "GameState",
    "PlayerGameData",
    "build_player_view",
    "is_over",
    "new_game",
    "parse_action",
    "state_hash",
    "PUNCH_DAMAGE",
    "PUNCH_RANGE",
]
