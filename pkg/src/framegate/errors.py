"""Exception hierarchy shared across the framegate package."""


class FrameGateError(Exception):
    """Base class for all framegate errors."""


class ConfigurationError(FrameGateError):
    """A config violates one of its invariants."""


class GameStateError(FrameGateError):
    """An operation was applied to a game in an invalid state (e.g. stepping a finished game)."""


class GateProtocolError(FrameGateError):
    """The publish/await discipline of a gate slot was violated."""


class GateAborted(FrameGateError):
    """The gate was aborted (consumer vanished mid-game in lockstep mode)."""

    def __init__(self, slot: int, reason: str):
        super().__init__(f"slot {slot} aborted: {reason}")
        self.slot = slot
        self.reason = reason


class MeasurementError(FrameGateError):
    """A timing value is outside its valid domain (e.g. negative latency)."""


class SlotTakenError(FrameGateError):
    """A player slot is already claimed by a live session."""


class ConnectError(FrameGateError):
    """The client could not reach the server."""


class BaselineProtocolError(FrameGateError):
    """A malformed line was received on the baseline text socket."""


class BenchRunError(FrameGateError):
    """A benchmark run failed; partial samples are preserved on the exception."""

    def __init__(self, message: str, partial_samples=None):
        super().__init__(message)
        self.partial_samples = list(partial_samples or [])
