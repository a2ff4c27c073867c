"""Game core: rules, views, hashing, and the determinism properties."""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framegate.errors import ConfigurationError, GameStateError
from framegate.game import (
    ActionCommand,
    GameConfig,
    build_player_view,
    is_over,
    new_game,
    parse_action,
    state_hash,
    step,
)

A = ActionCommand
ACTIONS = list(ActionCommand)


def make_game(**overrides):
    return new_game(GameConfig(**overrides))


def place(state, x1, x2):
    state.characters[0] = replace(state.characters[0], x=x1)
    state.characters[1] = replace(state.characters[1], x=x2)


class TestNewGame:
    def test_default_positions(self):
        state = make_game()
        assert state.frame_index == 0
        assert [c.x for c in state.characters] == [120, 840]
        assert all(c.hp == 400 for c in state.characters)
        assert state.characters[0].facing == 1
        assert state.characters[1].facing == -1

    def test_frame_delay_must_fit(self):
        with pytest.raises(ConfigurationError):
            new_game(GameConfig(frames_per_game=10, frame_delay=15))

    def test_small_arena_positions(self):
        state = make_game(arena_width=480)
        assert [c.x for c in state.characters] == [60, 420]

    def test_negative_sizes_rejected(self):
        with pytest.raises(ConfigurationError):
            new_game(GameConfig(audio_payload_bytes=-1))
        with pytest.raises(ConfigurationError):
            new_game(GameConfig(budget_ms=0))


class TestStep:
    def test_neutral_is_identity_except_frame(self):
        state = make_game()
        before = [c for c in state.characters]
        snap = step(state, A.NEUTRAL, A.NEUTRAL)
        assert snap.frame_index == 1
        assert [(c.hp, c.x) for c in snap.characters] == [
            (c.hp, c.x) for c in before
        ]

    def test_kick_in_range_deals_damage(self):
        state = make_game()
        place(state, 120, 220)  # distance 100 <= 120
        snap = step(state, A.KICK, A.NEUTRAL)
        assert snap.characters[1].hp == 390
        assert snap.characters[0].hp == 400

    def test_kick_out_of_range_misses(self):
        state = make_game()  # spawn distance 720
        snap = step(state, A.KICK, A.NEUTRAL)
        assert snap.characters[1].hp == 400

    def test_guard_halves_kick_damage(self):
        state = make_game()
        place(state, 120, 220)
        snap = step(state, A.KICK, A.GUARD)
        assert snap.characters[1].hp == 395  # 10 // 2

    def test_punch_damage_and_range(self):
        state = make_game()
        place(state, 100, 180)  # distance 80: punch connects
        snap = step(state, A.PUNCH, A.NEUTRAL)
        assert snap.characters[1].hp == 395
        state = make_game()
        place(state, 100, 181)  # distance 81: out of punch range
        snap = step(state, A.PUNCH, A.NEUTRAL)
        assert snap.characters[1].hp == 400

    def test_guard_halves_punch_damage_rounding_down(self):
        state = make_game()
        place(state, 100, 180)
        snap = step(state, A.PUNCH, A.GUARD)
        assert snap.characters[1].hp == 398  # 5 // 2 == 2

    def test_movement_clamps_to_arena(self):
        state = make_game()
        place(state, 0, 960)
        snap = step(state, A.MOVE_LEFT, A.MOVE_RIGHT)
        assert snap.characters[0].x == 0
        assert snap.characters[1].x == 960

    def test_attack_uses_post_move_distance(self):
        state = make_game()
        place(state, 120, 240)  # 120 apart; P2 steps closer to 230
        snap = step(state, A.KICK, A.MOVE_LEFT)
        assert snap.characters[1].hp == 390

    def test_step_finished_game_raises(self):
        state = make_game(frames_per_game=16, frame_delay=15)
        for _ in range(16):
            step(state, A.NEUTRAL, A.NEUTRAL)
        assert is_over(state)
        with pytest.raises(GameStateError):
            step(state, A.NEUTRAL, A.NEUTRAL)


class TestIsOver:
    def test_frame_limit(self):
        state = make_game()
        state.frame_index = 3600
        assert is_over(state)

    def test_fresh_game_not_over(self):
        assert not is_over(make_game())

    def test_knockout_ends_game(self):
        state = make_game()
        state.frame_index = 100
        state.characters[1] = replace(state.characters[1], hp=0)
        assert is_over(state)


class TestPlayerView:
    def test_blind_view_has_audio_only(self):
        state = make_game()
        view = build_player_view(state.snapshot(), blind=True, config=state.config)
        assert view.frame_data is None
        assert view.screen_data is None
        assert len(view.audio_data) == state.config.audio_payload_bytes

    def test_sighted_view_has_all_payloads(self):
        state = make_game()
        view = build_player_view(state.snapshot(), blind=False, config=state.config)
        assert view.frame_data == state.snapshot()
        assert len(view.screen_data) == state.config.screen_payload_bytes
        assert len(view.audio_data) == state.config.audio_payload_bytes

    def test_zero_screen_bytes_still_present(self):
        state = make_game(screen_payload_bytes=0)
        view = build_player_view(state.snapshot(), blind=False, config=state.config)
        assert view.screen_data == b""

    def test_payloads_deterministic_and_frame_keyed(self):
        state = make_game()
        snap = state.snapshot()
        v1 = build_player_view(snap, blind=False, config=state.config)
        v2 = build_player_view(snap, blind=False, config=state.config)
        assert v1 == v2
        step(state, A.NEUTRAL, A.NEUTRAL)
        v3 = build_player_view(state.snapshot(), blind=False, config=state.config)
        assert v3.audio_data != v1.audio_data or v3.screen_data != v1.screen_data

    def test_blind_and_sighted_share_audio(self):
        state = make_game()
        snap = state.snapshot()
        blind = build_player_view(snap, blind=True, config=state.config)
        sighted = build_player_view(snap, blind=False, config=state.config)
        assert blind.audio_data == sighted.audio_data


class TestParseAction:
    def test_known_actions(self):
        assert parse_action("KICK") == (A.KICK, True)
        assert parse_action(" guard ") == (A.GUARD, True)

    def test_unknown_maps_to_neutral_flagged(self):
        action, known = parse_action("DANCE")
        assert action is A.NEUTRAL
        assert known is False


class TestStateHash:
    def test_fresh_games_equal(self):
        assert state_hash(make_game()) == state_hash(make_game())

    def test_scripted_replay_is_identical(self):
        hashes = []
        for _ in range(2):
            state = make_game(frames_per_game=120, frame_delay=0, seed=3)
            for i in range(120):
                step(state, ACTIONS[i % 6], ACTIONS[(i + 1) % 6])
            hashes.append(state_hash(state))
        assert hashes[0] == hashes[1]

    def test_one_action_difference_changes_hash(self):
        results = []
        for variant in (A.KICK, A.PUNCH):
            state = make_game(frames_per_game=50, frame_delay=0)
            place(state, 120, 200)
            for i in range(50):
                step(state, variant if i == 25 else A.NEUTRAL, A.NEUTRAL)
            results.append(state_hash(state))
        assert results[0] != results[1]


script_strategy = st.lists(
    st.tuples(st.sampled_from(ACTIONS), st.sampled_from(ACTIONS)),
    min_size=1, max_size=80,
)


class TestProperties:
    @given(script=script_strategy)
    @settings(max_examples=40, deadline=None)
    def test_replay_determinism(self, script):
        digests = []
        for _ in range(2):
            state = make_game(frames_per_game=len(script), frame_delay=0)
            digests.append([state_hash(step(state, a1, a2)) for a1, a2 in script])
        assert digests[0] == digests[1]

    @given(script=script_strategy)
    @settings(max_examples=40, deadline=None)
    def test_positions_always_clamped(self, script):
        state = make_game(frames_per_game=len(script), frame_delay=0, arena_width=60,
                          move_step=25)
        for a1, a2 in script:
            snap = step(state, a1, a2)
            assert all(0 <= c.x <= 60 for c in snap.characters)

    @given(script=script_strategy)
    @settings(max_examples=40, deadline=None)
    def test_hp_non_increasing(self, script):
        state = make_game(frames_per_game=len(script), frame_delay=0, arena_width=100)
        previous = [c.hp for c in state.characters]
        for a1, a2 in script:
            if is_over(state):
                break
            snap = step(state, a1, a2)
            current = [c.hp for c in snap.characters]
            assert all(now <= before for now, before in zip(current, previous))
            previous = current

    def test_full_game_without_knockout_runs_exact_frame_count(self):
        state = make_game(frames_per_game=200, frame_delay=0)
        count = 0
        while not is_over(state):
            step(state, A.NEUTRAL, A.NEUTRAL)
            count += 1
        assert count == 200

    @given(frame=st.integers(min_value=0, max_value=3599))
    @settings(max_examples=30, deadline=None)
    def test_blind_views_never_leak(self, frame):
        state = make_game()
        state.frame_index = frame
        view = build_player_view(state.snapshot(), blind=True, config=state.config)
        assert view.frame_data is None and view.screen_data is None
