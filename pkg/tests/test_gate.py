"""Frame gate: publish/await/submit discipline, timing, and classification."""

import threading
import time
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framegate.errors import GateAborted, GateProtocolError, MeasurementError
from framegate.game import ActionCommand, GameConfig, build_player_view, new_game
from framegate.gate import FrameGate, GateMode, Outcome, classify, ns_to_ms

BUDGET = 16.66


def view_for(frame_index=0):
    config = GameConfig(audio_payload_bytes=16, screen_payload_bytes=16)
    state = new_game(config)
    state.frame_index = frame_index
    return build_player_view(state.snapshot(), blind=False, config=config)


def submit_later(gate, slot, action, delay_s):
    timer = threading.Timer(delay_s, lambda: gate.submit_action(slot, action))
    timer.start()
    return timer


class TestGateDiscipline:
    def test_publish_submit_await_round_trip(self):
        gate = FrameGate()
        gate.publish(1, view_for(5))
        outcome = gate.submit_action(1, "KICK")
        assert not outcome.stale
        result = gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        assert result.action is ActionCommand.KICK
        assert result.raw_action == "KICK"
        assert result.sample.frame_index == 5

    def test_double_publish_is_protocol_error(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        with pytest.raises(GateProtocolError):
            gate.publish(1, view_for())

    def test_await_without_publish_is_protocol_error(self):
        gate = FrameGate()
        with pytest.raises(GateProtocolError):
            gate.await_action(1, GateMode.LOCKSTEP, BUDGET)

    def test_stale_submit_discarded_and_counted(self):
        gate = FrameGate()
        outcome = gate.submit_action(1, "KICK")
        assert outcome.stale
        assert gate.stale_inputs == 1
        # the gate still works afterwards
        gate.publish(1, view_for())
        gate.submit_action(1, "GUARD")
        assert gate.await_action(1, GateMode.LOCKSTEP, BUDGET).action is ActionCommand.GUARD

    def test_second_submission_is_duplicate(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        assert not gate.submit_action(1, "KICK").stale
        second = gate.submit_action(1, "PUNCH")
        assert second.stale and second.duplicate
        assert gate.duplicate_inputs == 1
        assert gate.await_action(1, GateMode.LOCKSTEP, BUDGET).action is ActionCommand.KICK

    def test_unknown_action_flagged_and_neutral(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        outcome = gate.submit_action(1, "DANCE")
        assert outcome.unknown_action
        result = gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        assert result.action is ActionCommand.NEUTRAL
        assert result.raw_action == "DANCE"

    def test_publish_blocks_await_until_late_consumer_replies(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        submit_later(gate, 1, "KICK", 0.05)
        result = gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        assert result.action is ActionCommand.KICK

    def test_slots_are_independent(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        gate.publish(2, view_for())
        done = []

        def await_slot1():
            done.append(gate.await_action(1, GateMode.LOCKSTEP, BUDGET))

        blocker = threading.Thread(target=await_slot1)
        blocker.start()
        # slot 2 completes its round trip while slot 1 is still blocked
        gate.submit_action(2, "GUARD")
        assert gate.await_action(2, GateMode.LOCKSTEP, BUDGET).action is ActionCommand.GUARD
        assert not done
        gate.submit_action(1, "KICK")
        blocker.join(5)
        assert done and done[0].action is ActionCommand.KICK

    def test_abort_wakes_awaiting_producer(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        threading.Timer(0.02, lambda: gate.abort(1, "gone")).start()
        with pytest.raises(GateAborted):
            gate.await_action(1, GateMode.LOCKSTEP, BUDGET)


class TestGateTiming:
    def test_sample_matches_independently_timed_delay(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        t0 = time.monotonic_ns()
        time.sleep(0.005)
        gate.submit_action(1, "KICK")
        observed_ms = (time.monotonic_ns() - t0) / 1e6
        result = gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        assert result.sample.latency_ms >= 4.0
        assert abs(result.sample.latency_ms - observed_ms) <= 1.0

    def test_lockstep_returns_late_action_marked_miss(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        submit_later(gate, 1, "KICK", 0.020)
        result = gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        assert result.action is ActionCommand.KICK
        assert result.sample.outcome is Outcome.MISS
        assert result.sample.latency_ms > BUDGET

    def test_deadline_substitutes_neutral_after_budget(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        submit_later(gate, 1, "KICK", 0.020)
        result = gate.await_action(1, GateMode.DEADLINE, BUDGET)
        assert result.action is ActionCommand.NEUTRAL
        assert result.sample.outcome is Outcome.MISS

    def test_deadline_with_no_reply_times_out_neutral(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        result = gate.await_action(1, GateMode.DEADLINE, 5.0)
        assert result.action is ActionCommand.NEUTRAL
        assert result.raw_action is None
        assert result.sample.latency_ms >= 5.0

    def test_deadline_fast_reply_passes_through(self):
        gate = FrameGate()
        gate.publish(1, view_for())
        gate.submit_action(1, "PUNCH")
        result = gate.await_action(1, GateMode.DEADLINE, BUDGET)
        assert result.action is ActionCommand.PUNCH
        assert result.sample.outcome is Outcome.HIT


class TestClassify:
    def test_paper_values(self):
        assert classify(6.18, BUDGET) is Outcome.HIT
        assert classify(39.20, BUDGET) is Outcome.MISS

    def test_boundary_is_hit(self):
        assert classify(16.66, 16.66) is Outcome.HIT
        assert classify(16.661, 16.66) is Outcome.MISS

    def test_negative_latency_rejected(self):
        with pytest.raises(MeasurementError):
            classify(-0.1, BUDGET)

    @given(latency=st.floats(min_value=0, max_value=1e6),
           budget=st.floats(min_value=0.001, max_value=1e3))
    @settings(max_examples=200, deadline=None)
    def test_total_and_strict(self, latency, budget):
        outcome = classify(latency, budget)
        assert outcome is (Outcome.MISS if latency > budget else Outcome.HIT)


class TestNsToMs:
    def test_paper_style_values(self):
        assert float(ns_to_ms(5_660_000)) == 5.66
        assert float(ns_to_ms(0)) == 0.0
        assert float(ns_to_ms(39_200_000)) == 39.20

    def test_negative_rejected(self):
        with pytest.raises(MeasurementError):
            ns_to_ms(-1)

    def test_exactness_on_known_float_failure(self):
        # 123/1e6*1e6 != 123 in binary floating point; the exact form holds.
        assert ns_to_ms(123) * 1_000_000 == 123

    @given(ns=st.integers(min_value=0, max_value=10**18))
    @settings(max_examples=300, deadline=None)
    def test_exact_inverse(self, ns):
        assert ns_to_ms(ns) * 1_000_000 == ns
        assert isinstance(ns_to_ms(ns), Fraction)


class TestNextView:
    def test_consumer_sees_each_published_view_once(self):
        gate = FrameGate()
        received = []

        def consume():
            seq = 0
            while True:
                item = gate.next_view(1, seq)
                if item is None:
                    return
                seq, view = item
                received.append(view.frame_index)
                gate.submit_action(1, "KICK")

        consumer = threading.Thread(target=consume)
        consumer.start()
        for i in range(3):
            gate.publish(1, view_for(i))
            gate.await_action(1, GateMode.LOCKSTEP, BUDGET)
        gate.close()
        consumer.join(5)
        assert received == [0, 1, 2]

    def test_next_view_raises_after_abort(self):
        gate = FrameGate()
        gate.abort(1, "test")
        with pytest.raises(GateAborted):
            gate.next_view(1, 0)
