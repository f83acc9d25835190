"""Server behavior: administration RPCs, orchestration, topics, telemetry."""

import asyncio
import random

import pytest

from harness import (
    fast_config,
    running_server,
    subscribe_and_wait,
)
from milltwin.cell import FaultSpec, default_cell_config
from milltwin.model import (
    GameBoard,
    GameField,
    GameMove,
    PlayerRole,
    StatusCode,
)
from milltwin.protocol import PeerIdentity, PeerRole
from milltwin.rules import SessionInfo, apply_move, legal_moves, new_session
from milltwin.server import GamePhase, UnitHealth
from milltwin.vita import read_vita_log

T1, T2 = GameField.TRAY1, GameField.TRAY2


def run(coro):
    return asyncio.run(coro)


def F(name):
    return GameField(name)


def mv(frm, to):
    return GameMove(F(frm), F(to)).to_wire()


def scripted_game(seed=404, min_moves=40, min_captures=2):
    """Deterministic full game with enough captures, as (role, from, to)."""
    rng = random.Random(seed)
    while True:
        s = new_session()
        moves = []
        captures = 0
        while s.outcome is None:
            options = sorted(
                legal_moves(s), key=lambda m: (m.from_field.value, m.to_field.value)
            )
            m = rng.choice(options)
            if m.to_field.is_tray:
                captures += 1
            who = "p1" if s.state.next_player is PlayerRole.PLAYER_ONE else "p2"
            moves.append((who, m.from_field.value, m.to_field.value))
            s = apply_move(s, m)
        if len(moves) >= min_moves and captures >= min_captures:
            return moves, s


class TestGameAdministration:
    def test_init_game_with_two_healthy_units(self):
        async def scenario():
            async with running_server() as h:
                await h.add_cell("cell-a")
                await h.add_cell("cell-b")
                conn = await h.connect(PeerRole.PLAYER_ONE, "p1")
                status, _ = await conn.call("initGame")
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                for client in h.cell_clients:
                    assert client.cell.board == GameBoard.empty()
                assert h.server.phase is GamePhase.READY

        run(scenario())

    def test_init_game_mid_game_rejected(self):
        async def scenario():
            async with running_server() as h:
                p1, _ = await h.start_two_player_game()
                status, _ = await p1.call("initGame")
                assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())

    def test_init_game_fails_when_unit_reset_fails(self):
        async def scenario():
            async with running_server(fast_config()) as h:
                # reset #1 is the registration resync; #2 is initGame's
                await h.add_cell(
                    "flaky",
                    config=default_cell_config(
                        "flaky", fault_plan=(FaultSpec("reset", 2, "device_failure"),)
                    ),
                )
                conn = await h.connect(PeerRole.PLAYER_ONE, "p1")
                status, _ = await conn.call("initGame")
                assert status is StatusCode.BAD_DEVICE_FAILURE
                assert h.server.phase is GamePhase.IDLE
                assert h.server.session is None
                assert h.server.units["flaky"].health is UnitHealth.FAULTED
                # the next initGame rehabilitates the unit (reset #3 succeeds)
                status, _ = await conn.call("initGame")
                assert status is StatusCode.GOOD
                assert h.server.units["flaky"].health is UnitHealth.READY

        run(scenario())

    def test_start_game_requires_both_players(self):
        async def scenario():
            async with running_server() as h:
                p1 = await h.connect(PeerRole.PLAYER_ONE, "p1")
                status, _ = await p1.call("initGame")
                assert status is StatusCode.GOOD
                status, _ = await p1.call("startGame")
                assert status is StatusCode.BAD_INVALID_STATE
                await h.connect(PeerRole.PLAYER_TWO, "p2")
                status, _ = await p1.call("startGame")
                assert status is StatusCode.GOOD
                assert h.server.phase is GamePhase.RUNNING

        run(scenario())

    def test_start_game_publishes_initial_state(self):
        async def scenario():
            async with running_server() as h:
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                sub = await subscribe_and_wait(h.server, obs, "GameState")
                await h.start_two_player_game()
                first = await sub.next(2)
                second = await sub.next(2)
                assert second[1]["next"] == "PlayerOne"
                assert all(
                    e["occupation"] == "Empty" for e in second[1]["board"]
                )

        run(scenario())

    def test_reset_game_mid_game(self):
        async def scenario():
            async with running_server() as h:
                await h.add_cell("cell-a")
                p1, p2 = await h.start_two_player_game()
                await p1.call("nextMove", mv("tray1", "a1"))
                await h.server.drain_orders()
                status, _ = await p2.call("resetGame")
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                assert h.server.phase is GamePhase.IDLE
                assert h.server.session is None
                assert h.cell_clients[0].cell.board == GameBoard.empty()
                assert h.cell_clients[0].cell.tray_tokens() == 18

        run(scenario())

    def test_reset_publishes_null_markers(self):
        async def scenario():
            async with running_server() as h:
                p1, _ = await h.start_two_player_game()
                await p1.call("resetGame")
                obs = await h.connect(PeerRole.OBSERVER, "late")
                sub = obs.subscribe("GameState")
                seq, payload = await sub.next(2)
                assert payload is None

        run(scenario())


class TestNextMove:
    def test_valid_move_publishes_move_then_state(self):
        async def scenario():
            async with running_server() as h:
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                arrivals = []
                original = obs._dispatch

                def spy(msg):
                    if msg.kind == "publish":
                        arrivals.append((msg.topic, msg.seq))
                    original(msg)

                obs._dispatch = spy
                await subscribe_and_wait(h.server, obs, "GameMove")
                await subscribe_and_wait(h.server, obs, "GameState")
                p1, _ = await h.start_two_player_game()
                status, payload = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.GOOD
                assert payload == {"order_id": 1}
                for _ in range(100):
                    if any(t == "GameState" and s >= 3 for t, s in arrivals):
                        break
                    await asyncio.sleep(0.01)
                move_pos = arrivals.index(("GameMove", 1))
                state_pos = arrivals.index(("GameState", 3))  # init, start, move
                assert move_pos < state_pos

        run(scenario())

    def test_illegal_move_publishes_nothing(self):
        async def scenario():
            async with running_server() as h:
                p1, p2 = await h.start_two_player_game()
                obs = await h.connect(PeerRole.OBSERVER, "probe")
                move_sub = await subscribe_and_wait(h.server, obs, "GameMove")
                state_sub = await subscribe_and_wait(h.server, obs, "GameState")
                retained = await state_sub.next(2)  # running game retains state
                status, _ = await p1.call("nextMove", mv("a1", "a4"))
                assert status is StatusCode.BAD_INVALID_ARGUMENT
                status, _ = await p2.call("nextMove", mv("tray2", "a1"))
                assert status is StatusCode.BAD_INVALID_STATE
                status, _ = await p1.call("nextMove", {"from": "a1"})
                assert status is StatusCode.BAD_INVALID_ARGUMENT
                await asyncio.sleep(0.1)
                assert move_sub.drain_nowait() == []
                assert state_sub.drain_nowait() == []

        run(scenario())

    def test_observer_cannot_move(self):
        async def scenario():
            async with running_server() as h:
                await h.start_two_player_game()
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                status, _ = await obs.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())

    def test_move_before_start_rejected(self):
        async def scenario():
            async with running_server() as h:
                p1 = await h.connect(PeerRole.PLAYER_ONE, "p1")
                status, _ = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.BAD_INVALID_STATE
                await p1.call("initGame")
                status, _ = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.BAD_INVALID_STATE  # not started yet

        run(scenario())

    def test_simultaneous_calls_single_writer(self):
        async def scenario():
            async with running_server() as h:
                p1, _ = await h.start_two_player_game()
                a = asyncio.ensure_future(p1.call("nextMove", mv("tray1", "a1")))
                b = asyncio.ensure_future(p1.call("nextMove", mv("tray1", "d5")))
                (sa, _), (sb, _) = await asyncio.gather(a, b)
                assert sorted([sa.value, sb.value]) == [
                    "BAD_INVALID_STATE",
                    "GOOD",
                ]
                # exactly one token landed
                board = h.server.session.state.board
                assert 24 - board.count(board.occupations[0].__class__("Empty")) == 1

        run(scenario())

    def test_finished_game_rejects_moves(self):
        async def scenario():
            async with running_server() as h:
                p1, p2 = await h.start_two_player_game(threshold=1)
                moves, final = scripted_game(seed=11, min_moves=18, min_captures=0)
                for who, frm, to in moves:
                    conn = p1 if who == "p1" else p2
                    status, _ = await conn.call("nextMove", mv(frm, to))
                    if h.server.phase is GamePhase.FINISHED:
                        break
                assert h.server.phase is GamePhase.FINISHED
                nxt = h.server.session.state.next_player
                conn = p1 if nxt is PlayerRole.PLAYER_ONE else p2
                status, _ = await conn.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())


class TestRoleBinding:
    def test_taken_role_rejected(self):
        async def scenario():
            async with running_server() as h:
                await h.connect(PeerRole.PLAYER_ONE, "alice")
                conn = await h.raw_connect()
                status = await conn.send_hello(
                    PeerIdentity(PeerRole.PLAYER_ONE, "impostor")
                )
                assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())

    def test_role_freed_on_disconnect(self):
        async def scenario():
            async with running_server() as h:
                first = await h.connect(PeerRole.PLAYER_ONE, "alice")
                await first.close()
                await asyncio.sleep(0.05)
                again = await h.raw_connect()
                status = await again.send_hello(PeerIdentity(PeerRole.PLAYER_ONE, "bob"))
                assert status is StatusCode.GOOD

        run(scenario())

    def test_duplicate_unit_name_rejected(self):
        async def scenario():
            async with running_server() as h:
                await h.add_cell("cell-a")
                conn = await h.raw_connect()
                status = await conn.send_hello(
                    PeerIdentity(PeerRole.PRODUCTION_UNIT, "cell-a")
                )
                assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())

    def test_multiple_observers_allowed(self):
        async def scenario():
            async with running_server() as h:
                await h.connect(PeerRole.OBSERVER, "one")
                await h.connect(PeerRole.OBSERVER, "two")
                await h.connect(PeerRole.OBSERVER, "three")

        run(scenario())


class TestOrchestration:
    def test_two_units_six_vita_records(self, tmp_path):
        async def scenario():
            async with running_server(fast_config(tmp_path)) as h:
                await h.add_cell("cell-a")
                await h.add_cell("cell-b")
                p1, _ = await h.start_two_player_game()
                status, _ = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                result = h.server.order_results[1]
                assert result.aggregate is StatusCode.GOOD
                assert set(result.per_unit) == {"cell-a", "cell-b"}
                records = list(read_vita_log(tmp_path / "vita.ndjson"))
                assert len(records) == 6
                assert {r.unit for r in records} == {"cell-a", "cell-b"}
                by_unit_phases = {
                    (r.unit, r.sub_phase) for r in records
                }
                assert len(by_unit_phases) == 6  # 3 phases x 2 units
                assert all(r.status is StatusCode.GOOD for r in records)
                assert all(r.order_id == 1 for r in records)

        run(scenario())

    def test_one_shot_timeout_retried_to_good(self, tmp_path):
        async def scenario():
            config = fast_config(tmp_path, unit_deadline=0.3)
            async with running_server(config) as h:
                await h.add_cell(
                    "slow",
                    config=default_cell_config(
                        "slow",
                        fault_plan=(
                            FaultSpec("executeMove", 1, "timeout", stall_ms=400),
                        ),
                    ),
                )
                p1, _ = await h.start_two_player_game()
                status, _ = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                result = h.server.order_results[1]
                assert result.per_unit["slow"] is StatusCode.GOOD
                assert h.server.units["slow"].health is UnitHealth.READY
                records = list(read_vita_log(tmp_path / "vita.ndjson"))
                # the extra attempt is visible: one timeout + three good
                failures = [r for r in records if not r.status.is_good]
                assert len(failures) == 1
                assert failures[0].status is StatusCode.BAD_TIMEOUT
                assert len([r for r in records if r.status.is_good]) == 3

        run(scenario())

    def test_permanent_failure_faults_unit_game_continues(self, tmp_path):
        async def scenario():
            config = fast_config(tmp_path, unit_deadline=0.3)
            async with running_server(config) as h:
                broken_faults = tuple(
                    FaultSpec("executeMove", n, "device_failure") for n in range(1, 10)
                )
                await h.add_cell(
                    "broken",
                    config=default_cell_config("broken", fault_plan=broken_faults),
                )
                await h.add_cell("healthy")
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                health_sub = await subscribe_and_wait(h.server, obs, "UnitHealth")
                p1, _ = await h.start_two_player_game()
                status, _ = await p1.call("nextMove", mv("tray1", "a1"))
                assert status is StatusCode.GOOD  # game unaffected
                await h.server.drain_orders()
                result = h.server.order_results[1]
                assert result.aggregate is StatusCode.BAD_DEVICE_FAILURE
                assert result.per_unit["broken"] is StatusCode.BAD_DEVICE_FAILURE
                assert result.per_unit["healthy"] is StatusCode.GOOD
                assert h.server.units["broken"].health is UnitHealth.FAULTED
                # Faulted observable on the topic
                saw_faulted = False
                for _ in range(50):
                    seq, payload = await health_sub.next(2)
                    if payload["units"].get("broken") == "Faulted":
                        saw_faulted = True
                        break
                assert saw_faulted
                # three attempts logged for the broken unit
                records = list(read_vita_log(tmp_path / "vita.ndjson"))
                broken_failures = [
                    r for r in records if r.unit == "broken" and not r.status.is_good
                ]
                assert len(broken_failures) == 3  # 1 try + 2 retries
                # twin remains authoritative; the game may continue
                status, _ = await p1.call("nextMove", mv("tray2", "g7"))
                assert status is StatusCode.BAD_INVALID_STATE  # p1 out of turn
                assert h.server.phase is GamePhase.RUNNING

        run(scenario())

    def test_faulted_unit_excluded_from_orders(self, tmp_path):
        async def scenario():
            config = fast_config(tmp_path, unit_deadline=0.3)
            async with running_server(config) as h:
                broken_faults = tuple(
                    FaultSpec("executeMove", n, "device_failure") for n in range(1, 10)
                )
                await h.add_cell(
                    "broken",
                    config=default_cell_config("broken", fault_plan=broken_faults),
                )
                await h.add_cell("healthy")
                p1, p2 = await h.start_two_player_game()
                await p1.call("nextMove", mv("tray1", "a1"))
                await h.server.drain_orders()
                await p2.call("nextMove", mv("tray2", "g7"))
                await h.server.drain_orders()
                assert set(h.server.order_results[2].per_unit) == {"healthy"}

        run(scenario())

    def test_unit_disconnect_published(self):
        async def scenario():
            async with running_server() as h:
                client = await h.add_cell("cell-a")
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                sub = await subscribe_and_wait(h.server, obs, "UnitHealth")
                first = await sub.next(2)
                await client.close()
                for _ in range(50):
                    seq, payload = await sub.next(2)
                    if payload["units"]["cell-a"] == "Disconnected":
                        break
                else:
                    pytest.fail("never saw Disconnected")

        run(scenario())

    def test_stale_orders_dropped_after_reset(self):
        async def scenario():
            async with running_server(fast_config()) as h:
                await h.add_cell(
                    "slowpoke",
                    config=default_cell_config("slowpoke", sub_phase_duration_ms=80),
                )
                p1, p2 = await h.start_two_player_game()
                await p1.call("nextMove", mv("tray1", "a1"))  # slow order 1
                await p2.call("nextMove", mv("tray2", "g7"))  # queued order 2
                status, _ = await p1.call("resetGame")
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                assert 2 not in h.server.order_results
                assert h.cell_clients[0].cell.board == GameBoard.empty()

        run(scenario())


class TestTwinConsistency:
    def test_scripted_game_keeps_cells_in_lockstep(self):
        async def scenario():
            async with running_server(fast_config()) as h:
                a = await h.add_cell("cell-a", config=default_cell_config("cell-a", grid_spacing_mm=40.0))
                b = await h.add_cell(
                    "cell-b",
                    config=default_cell_config("cell-b", grid_spacing_mm=60.0, kinematics_label="delta"),
                )
                p1, p2 = await h.start_two_player_game()
                moves, _ = scripted_game(seed=42, min_moves=30)
                for who, frm, to in moves[:30]:
                    conn = p1 if who == "p1" else p2
                    status, _ = await conn.call("nextMove", mv(frm, to))
                    assert status is StatusCode.GOOD
                    await h.server.drain_orders()
                    server_board = h.server.session.state.board
                    assert a.cell.board == server_board
                    assert b.cell.board == server_board
                    assert h.server.units["cell-a"].last_reported_board == server_board
                    assert h.server.units["cell-b"].last_reported_board == server_board

        run(scenario())

    def test_late_joining_unit_resyncs_mid_game(self):
        async def scenario():
            async with running_server(fast_config()) as h:
                p1, p2 = await h.start_two_player_game()
                for who, frm, to in [
                    ("p1", "tray1", "a1"),
                    ("p2", "tray2", "g7"),
                    ("p1", "tray1", "d1"),
                    ("p2", "tray2", "g4"),
                ]:
                    conn = p1 if who == "p1" else p2
                    status, _ = await conn.call("nextMove", mv(frm, to))
                    assert status is StatusCode.GOOD
                late = await h.add_cell("latecomer")
                assert late.cell.board == h.server.session.state.board
                assert h.server.units["latecomer"].health is UnitHealth.READY
                # and it follows subsequent moves
                status, _ = await p1.call("nextMove", mv("tray1", "g1"))
                assert status is StatusCode.GOOD
                await h.server.drain_orders()
                assert late.cell.board == h.server.session.state.board

        run(scenario())


class TestTopics:
    def test_observer_joining_mid_game_sees_current_state(self):
        async def scenario():
            async with running_server() as h:
                p1, _ = await h.start_two_player_game()
                await p1.call("nextMove", mv("tray1", "d5"))
                obs = await h.connect(PeerRole.OBSERVER, "late", via="ws")
                sub = obs.subscribe("GameState")
                seq, payload = await sub.next(2)
                d5 = [e for e in payload["board"] if e["field"] == "d5"]
                assert d5[0]["occupation"] == "PlayerOne"

        run(scenario())

    def test_session_info_topic_carries_bookkeeping(self):
        async def scenario():
            async with running_server() as h:
                p1, _ = await h.start_two_player_game(threshold=77)
                await p1.call("nextMove", mv("tray1", "a1"))
                obs = await h.connect(PeerRole.OBSERVER, "watcher")
                sub = obs.subscribe("SessionInfo")
                seq, payload = await sub.next(2)
                session = SessionInfo.from_wire(payload)
                assert session.tray_unplaced == (8, 9)
                assert session.move_number == 1
                assert session.draw_threshold == 77

        run(scenario())

    def test_game_move_topic_retains_last_accepted(self):
        async def scenario():
            async with running_server() as h:
                p1, p2 = await h.start_two_player_game()
                await p1.call("nextMove", mv("tray1", "a1"))
                await p2.call("nextMove", mv("tray2", "g7"))
                obs = await h.connect(PeerRole.OBSERVER, "late")
                sub = obs.subscribe("GameMove")
                seq, payload = await sub.next(2)
                assert payload == {"from": "tray2", "to": "g7"}

        run(scenario())
