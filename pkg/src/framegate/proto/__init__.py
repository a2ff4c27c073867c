"""Message classes built at import time from the checked-in descriptor set.

framegate.proto is the schema of record; framegate.pb is its compiled
FileDescriptorSet (see scripts/gen_proto.sh).  Message classes come from
the protobuf runtime, so there is no hand-written wire parsing here.
"""

from importlib.resources import files

from google.protobuf import descriptor_pb2, descriptor_pool, message_factory

SERVICE_NAME = "framegate.FrameGate"

_pool = descriptor_pool.Default()
_fds = descriptor_pb2.FileDescriptorSet.FromString(
    files(__name__).joinpath("framegate.pb").read_bytes()
)
for _file in _fds.file:
    try:
        _pool.Add(_file)
    except TypeError:
        # Already registered (repeated import under a fresh module object).
        pass


def _message(name: str):
    return message_factory.GetMessageClass(_pool.FindMessageTypeByName(f"framegate.{name}"))


InitializeRequest = _message("InitializeRequest")
InitializeResponse = _message("InitializeResponse")
ParticipateRequest = _message("ParticipateRequest")
PlayerActionMessage = _message("PlayerActionMessage")
InputAck = _message("InputAck")
CharacterState = _message("CharacterState")
FrameState = _message("FrameState")
PlayerGameData = _message("PlayerGameData")

__all__ = [
    "SERVICE_NAME",
    "InitializeRequest",
    "InitializeResponse",
    "ParticipateRequest",
    "PlayerActionMessage",
    "InputAck",
    "CharacterState",
    "FrameState",
    "PlayerGameData",
]
