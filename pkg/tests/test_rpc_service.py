"""The gRPC service surface: sessions, stream contract, inputs, failure modes."""

import threading
import time

import pytest

from framegate import proto
from framegate.client import (
    connect_and_register,
    kick_agent,
    run_agent,
    run_agents,
    scripted_agent,
)
from framegate.errors import ConnectError, SlotTakenError
from framegate.grpclite import LiteChannel, RpcError, StatusCode
from framegate.rpc import FrameGateStub, raw_participate

from conftest import small_config


class TestInitialize:
    def test_claims_slots_and_binds_blindness(self, harness_factory):
        h = harness_factory()
        s1 = connect_and_register(h.address, 1, "KickAI", blind=False)
        s2 = connect_and_register(h.address, 2, "BlindAI", blind=True)
        assert s1.player_uuid and s2.player_uuid
        assert s1.player_uuid != s2.player_uuid
        assert h.runner._bindings[1].name == "KickAI"
        assert h.runner._bindings[2].blind is True
        s1.close(), s2.close()

    def test_second_claim_is_slot_taken(self, harness_factory):
        h = harness_factory()
        s1 = connect_and_register(h.address, 1, "KickAI")
        with pytest.raises(SlotTakenError):
            connect_and_register(h.address, 1, "Other")
        s1.close()

    def test_empty_name_rejected(self, harness_factory):
        h = harness_factory()
        with pytest.raises(ValueError):
            connect_and_register(h.address, 1, "")

    def test_unreachable_server_is_connect_error(self):
        import socket

        probe = socket.create_server(("127.0.0.1", 0))
        dead_port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(ConnectError):
            connect_and_register(f"127.0.0.1:{dead_port}", 1, "KickAI", timeout=2)


class TestParticipate:
    def test_unknown_uuid_not_found(self, harness_factory):
        h = harness_factory()
        channel = LiteChannel(h.address)
        stub = FrameGateStub(channel)
        with pytest.raises(RpcError) as err:
            list(stub.Participate(proto.ParticipateRequest(player_uuid="nope")))
        assert err.value.code() is StatusCode.NOT_FOUND
        channel.close()

    def test_duplicate_participate_rejected(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=40, frame_delay=0))
        session = connect_and_register(h.address, 1, "KickAI")
        first = session.stub.Participate(
            proto.ParticipateRequest(player_uuid=session.player_uuid))
        # second call on a parallel channel while the first stream is open
        other = LiteChannel(h.address)
        stub2 = FrameGateStub(other)
        with pytest.raises(RpcError) as err:
            list(stub2.Participate(
                proto.ParticipateRequest(player_uuid=session.player_uuid)))
        assert err.value.code() is StatusCode.FAILED_PRECONDITION
        assert "ALREADY_STREAMING" in err.value.details()
        other.close()
        first.cancel()
        session.close()

    def test_stream_contract_indices_and_count(self, harness_factory):
        config = small_config(frames_per_game=60, frame_delay=5)
        h = harness_factory(config)
        indices = {1: [], 2: []}

        def recorder(slot):
            def agent(view):
                indices[slot].append(view.frame_index)
                return "KICK"
            return agent

        h.spawn_agent(1, recorder(1))
        h.spawn_agent(2, recorder(2))
        runner = h.finish()
        assert runner.result.completed
        for slot in (1, 2):
            assert indices[slot] == list(range(5, 60))
        assert h.summaries["agent-1"].frames_handled == 55
        assert runner.gate.stale_inputs == 0
        assert runner.gate.duplicate_inputs == 0

    def test_blind_gating_holds_on_the_wire(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=20, frame_delay=0))
        blind = connect_and_register(h.address, 1, "BlindAI", blind=True)
        raw_stream = raw_participate(blind.channel)

        sighted_done = []

        def play_sighted():
            s2 = connect_and_register(h.address, 2, "KickAI")
            sighted_done.append(run_agent(s2, kick_agent))
            s2.close()

        t = threading.Thread(target=play_sighted)
        raw_frames = []
        inputs = blind.channel.unary_unary_deferred(
            "/framegate.FrameGate/Input",
            proto.PlayerActionMessage.SerializeToString, proto.InputAck.FromString)
        t.start()
        for raw in raw_stream(
                proto.ParticipateRequest(player_uuid=blind.player_uuid)):
            raw_frames.append(bytes(raw))
            inputs(proto.PlayerActionMessage(player_uuid=blind.player_uuid,
                                             action="KICK"))
        t.join(30)
        h.finish()
        assert len(raw_frames) == 20
        for raw in raw_frames:
            parsed = proto.PlayerGameData.FromString(raw)
            assert not parsed.HasField("frame_data")
            assert not parsed.HasField("screen_data")
            # audio only: far smaller than any sighted frame
            assert len(raw) < 512
        blind.close()

    def test_solo_mode_plays_against_builtin_neutral(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=30, frame_delay=3), solo=True)
        h.spawn_agent(1, kick_agent)
        runner = h.finish()
        assert runner.result.completed
        assert h.summaries["agent-1"].frames_handled == 27
        assert [entry.actions[1] for entry in runner.action_log] == ["NEUTRAL"] * 27


class TestInput:
    def test_unknown_uuid_not_found(self, harness_factory):
        h = harness_factory()
        channel = LiteChannel(h.address)
        stub = FrameGateStub(channel)
        with pytest.raises(RpcError) as err:
            stub.Input(proto.PlayerActionMessage(player_uuid="bad", action="KICK"),
                       timeout=5)
        assert err.value.code() is StatusCode.NOT_FOUND
        channel.close()

    def test_unknown_action_acked_and_neutral_applied(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=12, frame_delay=0))
        acks = []

        def dancer(view):
            return "DANCE"

        def play(slot, agent):
            session = connect_and_register(h.address, slot, f"p{slot}")
            summary = run_agent(session, agent)
            acks.append(summary)
            session.close()

        threads = [threading.Thread(target=play, args=(1, dancer)),
                   threading.Thread(target=play, args=(2, kick_agent))]
        [t.start() for t in threads]
        runner = h.finish()
        [t.join(10) for t in threads]
        dancer_summary = next(s for s in acks if s.unknown_action_acks)
        assert dancer_summary.unknown_action_acks == 12
        assert dancer_summary.error is None
        assert all(entry.actions[0] == "DANCE" for entry in runner.action_log)

    def test_duplicate_input_for_one_frame_is_stale(self, harness_factory):
        # Both sessions driven manually on one thread; player 2's reply is
        # withheld while player 1 double-submits, so the loop cannot advance
        # and the second submission must hit the same pending view.
        h = harness_factory(small_config(frames_per_game=6, frame_delay=0))
        s1 = connect_and_register(h.address, 1, "manual-1")
        s2 = connect_and_register(h.address, 2, "manual-2")
        stream1 = s1.stub.Participate(
            proto.ParticipateRequest(player_uuid=s1.player_uuid))
        stream2 = s2.stub.Participate(
            proto.ParticipateRequest(player_uuid=s2.player_uuid))
        stale_seen = 0
        for _ in range(6):
            next(stream1)
            next(stream2)
            first = s1.stub.Input(proto.PlayerActionMessage(
                player_uuid=s1.player_uuid, action="KICK"))
            assert not first.stale
            second = s1.stub.Input(proto.PlayerActionMessage(
                player_uuid=s1.player_uuid, action="GUARD"))
            assert second.stale
            stale_seen += 1
            s2.stub.Input(proto.PlayerActionMessage(
                player_uuid=s2.player_uuid, action="KICK"))
        runner = h.finish()
        assert stale_seen == 6
        assert runner.gate.stale_inputs == 6
        # the loop was never disturbed: first submission won every frame
        assert runner.result.completed
        assert all(entry.actions[0] == "KICK" for entry in runner.action_log)
        s1.close(), s2.close()

    def test_round_trip_identity_of_action_strings(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=8, frame_delay=0))
        h.spawn_agent(1, lambda view: "kick")  # lowercase survives to the log
        h.spawn_agent(2, scripted_agent({}, default="GUARD"))
        runner = h.finish()
        assert [e.actions for e in runner.action_log] == [("kick", "GUARD")] * 8


class TestLifecycle:
    def test_uuid_uniqueness_across_agent_restarts(self, harness_factory):
        h = harness_factory()
        uuids = set()
        for _ in range(5):
            session = connect_and_register(h.address, 1, "restarting")
            uuids.add(session.player_uuid)
            stream = session.stub.Participate(
                proto.ParticipateRequest(player_uuid=session.player_uuid))
            stream.cancel()  # pre-game disconnect frees the slot
            session.close()
            deadline = time.monotonic() + 5
            while 1 in h.runner._bindings and time.monotonic() < deadline:
                time.sleep(0.01)
        assert len(uuids) == 5

    def test_midgame_disconnect_aborts_lockstep(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=400, frame_delay=0))
        seen = []

        def quitter(view):
            seen.append(view.frame_index)
            if len(seen) >= 5:
                raise KeyboardInterrupt  # escapes run_agent, closing the channel
            return "KICK"

        def play_quitter():
            session = connect_and_register(h.address, 1, "quitter")
            try:
                run_agent(session, quitter)
            except KeyboardInterrupt:
                pass
            finally:
                session.close()

        def play_victim():
            session = connect_and_register(h.address, 2, "victim")
            h.summaries["victim"] = run_agent(session, kick_agent)
            session.close()

        threads = [threading.Thread(target=play_quitter),
                   threading.Thread(target=play_victim)]
        [t.start() for t in threads]
        assert h.runner.wait_finished(30)
        [t.join(15) for t in threads]
        assert h.runner.result.error is not None
        assert not h.runner.result.completed
        victim = h.summaries["victim"]
        assert victim.frames_handled < 400


class TestRunAgentsMultiplexed:
    def test_two_sessions_on_one_thread(self, harness_factory):
        h = harness_factory(small_config(frames_per_game=40, frame_delay=5))
        sessions = [connect_and_register(h.address, s, f"p{s}") for s in (1, 2)]
        summaries = run_agents([(s, kick_agent) for s in sessions])
        runner = h.finish()
        for summary in summaries:
            assert summary.error is None
            assert summary.frames_handled == 35
            assert summary.stale_acks == 0
        assert runner.gate.stale_inputs == 0
        for s in sessions:
            s.close()
