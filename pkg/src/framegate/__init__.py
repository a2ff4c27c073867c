"""Frame-budget game-state streaming over gRPC with a text-socket baseline and bench harness."""

from .errors import (
    BaselineProtocolError,
    BenchRunError,
    ConfigurationError,
    ConnectError,
    FrameGateError,
    GameStateError,
    GateAborted,
    GateProtocolError,
    MeasurementError,
    SlotTakenError,
)
from .game import (
    ActionCommand,
    CharacterState,
    FrameState,
    GameConfig,
    GameState,
    PlayerGameData,
    build_player_view,
    is_over,
    new_game,
    parse_action,
    state_hash,
    step,
)
from .gate import (
    FrameGate,
    GateMode,
    GateResult,
    LatencySample,
    Outcome,
    SubmitOutcome,
    classify,
    ns_to_ms,
)
from .loop import FrameLogEntry, GameResult, GameRunner
from .server import FrameGateServer

__version__ = "0.1.0"
