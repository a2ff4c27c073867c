"""FrameGate service wiring: the method table for servers and the client stub."""

from __future__ import annotations

from . import proto
from .grpclite import LiteChannel, MethodDef

PATH_INITIALIZE = f"/{proto.SERVICE_NAME}/Initialize"
PATH_PARTICIPATE = f"/{proto.SERVICE_NAME}/Participate"
PATH_INPUT = f"/{proto.SERVICE_NAME}/Input"


def frame_gate_methods(servicer) -> dict[str, MethodDef]:
    """Method table binding a servicer's handlers to the wire schema."""
    return {
        "Initialize": MethodDef(
            handler=servicer.Initialize,
            request_deserializer=proto.InitializeRequest.FromString,
            response_serializer=proto.InitializeResponse.SerializeToString,
        ),
        "Participate": MethodDef(
            handler=servicer.Participate,
            request_deserializer=proto.ParticipateRequest.FromString,
            response_serializer=proto.PlayerGameData.SerializeToString,
            server_streaming=True,
        ),
        "Input": MethodDef(
            handler=servicer.Input,
            request_deserializer=proto.PlayerActionMessage.FromString,
            response_serializer=proto.InputAck.SerializeToString,
        ),
    }


class FrameGateStub:
    """Client-side callables for the three FrameGate methods."""

    def __init__(self, channel: LiteChannel):
        self.Initialize = channel.unary_unary(
            PATH_INITIALIZE,
            proto.InitializeRequest.SerializeToString,
            proto.InitializeResponse.FromString,
        )
        self.Participate = channel.unary_stream(
            PATH_PARTICIPATE,
            proto.ParticipateRequest.SerializeToString,
            proto.PlayerGameData.FromString,
        )
        self.Input = channel.unary_unary(
            PATH_INPUT,
            proto.PlayerActionMessage.SerializeToString,
            proto.InputAck.FromString,
        )


def raw_participate(channel: LiteChannel):
    """Participate callable yielding raw wire bytes, for wire-capture assertions."""
    return channel.unary_stream(
        PATH_PARTICIPATE, proto.ParticipateRequest.SerializeToString, None
    )
