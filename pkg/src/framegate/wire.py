"""Converters between domain types and their wire messages."""

from __future__ import annotations

from . import proto
from .game import ActionCommand, CharacterState, FrameState, PlayerGameData


def frame_to_proto(state: FrameState) -> proto.FrameState:
    msg = proto.FrameState(frame_index=state.frame_index)
    for c in state.characters:
        msg.characters.add(hp=c.hp, x=c.x, facing=c.facing, last_action=c.last_action.value)
    return msg


_ACTION_BY_VALUE = {a.value: a for a in ActionCommand}


def frame_from_proto(msg: proto.FrameState) -> FrameState:
    chars = tuple(
        CharacterState(
            hp=c.hp,
            x=c.x,
            facing=c.facing,
            last_action=_ACTION_BY_VALUE[c.last_action],
        )
        for c in msg.characters
    )
    return FrameState(frame_index=msg.frame_index, characters=chars)


def view_to_proto(view: PlayerGameData) -> proto.PlayerGameData:
    msg = proto.PlayerGameData(frame_index=view.frame_index, audio_data=view.audio_data)
    if view.frame_data is not None:
        msg.frame_data.CopyFrom(frame_to_proto(view.frame_data))
    if view.screen_data is not None:
        msg.screen_data = view.screen_data
    return msg


def view_from_proto(msg: proto.PlayerGameData) -> PlayerGameData:
    return PlayerGameData(
        frame_index=msg.frame_index,
        audio_data=msg.audio_data,
        frame_data=frame_from_proto(msg.frame_data) if msg.HasField("frame_data") else None,
        screen_data=msg.screen_data if msg.HasField("screen_data") else None,
    )


def view_to_bytes(view: PlayerGameData) -> bytes:
    return view_to_proto(view).SerializeToString()


def view_from_bytes(data: bytes) -> PlayerGameData:
    return view_from_proto(proto.PlayerGameData.FromString(data))
