"""Simulated cell: shadow fidelity, tray policies, faults, telemetry."""

import asyncio
import json
import random

import pytest

from milltwin.cell import (
    CellConfig,
    FaultSpec,
    RobotCell,
    TrayError,
    cell_config_from_json,
    cell_config_to_json,
    default_cell_config,
    load_cell_config,
)
from milltwin.model import (
    GameBoard,
    GameField,
    GameFieldOccupationState,
    StatusCode,
    move,
)
from milltwin.rules import apply_move, legal_moves, new_session

EMPTY = GameFieldOccupationState.EMPTY
T1, T2 = GameField.TRAY1, GameField.TRAY2


def run(coro):
    return asyncio.run(coro)


def F(name):
    return GameField(name)


class TestCellConfig:
    def test_default_config_is_complete(self):
        cfg = default_cell_config("cell-a")
        assert len(cfg.field_coordinates) == 24
        assert len(cfg.tray_slots[T1]) == 9
        assert len(cfg.tray_slots[T2]) == 9

    def test_json_round_trip(self):
        cfg = default_cell_config(
            "cell-a",
            sub_phase_duration_ms=400,
            latency_jitter_ms=100,
            fault_plan=(FaultSpec("executeMove", 3, "device_failure"),),
            deviation_sigma_mm=0.3,
        )
        assert cell_config_from_json(json.loads(json.dumps(cell_config_to_json(cfg)))) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = default_cell_config("cell-b", kinematics_label="delta")
        path = tmp_path / "cell.json"
        path.write_text(json.dumps(cell_config_to_json(cfg)))
        assert load_cell_config(path) == cfg

    def test_missing_fields_rejected(self):
        cfg = default_cell_config("x")
        coords = dict(cfg.field_coordinates)
        del coords[GameField.A1]
        with pytest.raises(ValueError, match="a1"):
            CellConfig(name="x", field_coordinates=coords, tray_slots=cfg.tray_slots)

    def test_scalar_duration_shorthand(self):
        raw = cell_config_to_json(default_cell_config("x"))
        raw["sub_phase_duration_ms"] = 250
        cfg = cell_config_from_json(raw)
        assert all(v == 250 for v in cfg.sub_phase_duration_ms.values())

    def test_unknown_keys_rejected(self):
        raw = cell_config_to_json(default_cell_config("x"))
        raw["firmware"] = "v2"
        with pytest.raises(ValueError, match="firmware"):
            cell_config_from_json(raw)

    def test_bad_fault_kind_rejected(self):
        with pytest.raises(ValueError):
            FaultSpec("executeMove", 1, "gremlins")


class TestExecuteMove:
    def test_placement_updates_tray_and_board(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            status, payload = await cell.execute_move(move(T1, F("a1")))
            assert status is StatusCode.GOOD
            assert cell.trays.count(T1) == 8
            assert cell.board.occupation(F("a1")) is GameFieldOccupationState.PLAYER_ONE
            assert GameBoard.from_wire(payload["board"]) == cell.board
            assert [e["sub_phase"] for e in payload["telemetry"]] == [
                "PickUp",
                "MoveToken",
                "PlaceToken",
            ]

        run(scenario())

    def test_capture_returns_token_to_tray(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            await cell.execute_move(move(T2, F("g7")))
            status, _ = await cell.execute_move(move(F("g7"), T2))
            assert status is StatusCode.GOOD
            assert cell.board.occupation(F("g7")) is EMPTY
            assert cell.trays.count(T2) == 9

        run(scenario())

    def test_wrong_tray_for_capture_rejected(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            await cell.execute_move(move(T2, F("g7")))
            status, payload = await cell.execute_move(move(F("g7"), T1))
            assert status is StatusCode.BAD_INVALID_STATE
            assert "belong" in payload["reason"]

        run(scenario())

    def test_shadow_inconsistency_rejected(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            status, payload = await cell.execute_move(move(F("a1"), F("a4")))
            assert status is StatusCode.BAD_INVALID_STATE
            assert "empty" in payload["reason"]
            await cell.execute_move(move(T1, F("a1")))
            await cell.execute_move(move(T2, F("a4")))
            status, payload = await cell.execute_move(move(F("a1"), F("a4")))
            assert status is StatusCode.BAD_INVALID_STATE
            assert "occupied" in payload["reason"]

        run(scenario())

    def test_equal_endpoints_rejected_at_the_rpc_surface(self):
        async def scenario():
            from milltwin.cell import CellClient

            client = CellClient(RobotCell(default_cell_config("c"), seed=1), "unused")
            status, _ = await client._handle_request(
                None, "executeMove", {"from": "a1", "to": "a1"}
            )
            assert status is StatusCode.BAD_INVALID_ARGUMENT
            status, _ = await client._handle_request(None, "mystery", {})
            assert status is StatusCode.BAD_NOT_FOUND

        run(scenario())

    def test_tray_conservation(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=3)
            rng = random.Random(3)
            s = new_session()
            while s.outcome is None and s.move_number < 60:
                ms = sorted(
                    legal_moves(s),
                    key=lambda m: (m.from_field.value, m.to_field.value),
                )
                m = rng.choice(ms)
                s = apply_move(s, m)
                status, _ = await cell.execute_move(m)
                assert status is StatusCode.GOOD
                assert cell.board_tokens() + cell.tray_tokens() == 18

        run(scenario())

    def test_reset_restores_initial_state(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            await cell.execute_move(move(T1, F("d5")))
            status, payload = await cell.reset()
            assert status is StatusCode.GOOD
            assert cell.board == GameBoard.empty()
            assert cell.tray_tokens() == 18
            status, _ = await cell.reset()  # idempotent
            assert status is StatusCode.GOOD
            assert cell.board == GameBoard.empty()

        run(scenario())


class TestFaultPlan:
    def test_scripted_device_failure_on_third_order(self):
        async def scenario():
            cfg = default_cell_config(
                "c", fault_plan=(FaultSpec("executeMove", 3, "device_failure"),)
            )
            cell = RobotCell(cfg, seed=1)
            assert (await cell.execute_move(move(T1, F("a1"))))[0] is StatusCode.GOOD
            assert (await cell.execute_move(move(T2, F("a4"))))[0] is StatusCode.GOOD
            status, _ = await cell.execute_move(move(T1, F("a7")))
            assert status is StatusCode.BAD_DEVICE_FAILURE
            # board untouched by the failed order
            assert cell.board.occupation(F("a7")) is EMPTY
            # and the next order works again
            assert (await cell.execute_move(move(T1, F("a7"))))[0] is StatusCode.GOOD

        run(scenario())

    def test_timeout_fault_stalls_without_executing(self):
        async def scenario():
            cfg = default_cell_config(
                "c",
                fault_plan=(FaultSpec("executeMove", 1, "timeout", stall_ms=50),),
            )
            cell = RobotCell(cfg, seed=1)
            status, payload = await cell.execute_move(move(T1, F("a1")))
            assert status is StatusCode.BAD_TIMEOUT
            assert payload is None
            assert cell.board.occupation(F("a1")) is EMPTY

        run(scenario())

    def test_reset_fault(self):
        async def scenario():
            cfg = default_cell_config("c", fault_plan=(FaultSpec("reset", 1, "device_failure"),))
            cell = RobotCell(cfg, seed=1)
            await cell.execute_move(move(T1, F("a1")))
            status, _ = await cell.reset()
            assert status is StatusCode.BAD_DEVICE_FAILURE
            # state unchanged by the failed reset
            assert cell.board.occupation(F("a1")) is not EMPTY
            assert (await cell.reset())[0] is StatusCode.GOOD

        run(scenario())


class TestCoordinates:
    def test_tray_pick_is_lifo(self):
        cell = RobotCell(default_cell_config("c"), seed=1)
        cfg = cell.config
        pick, place = cell.resolve_coordinates(move(T1, F("a1")))
        assert pick == cfg.tray_slots[T1][8]  # highest occupied slot
        assert place == cfg.field_coordinates[F("a1")]

    def test_tray_place_is_first_free(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            # reduce tray2 to 3 tokens, then capture one back: it lands in
            # the lowest free slot, the 4th
            for f in ("g7", "g4", "g1", "f6", "f4", "f2"):
                await cell.execute_move(move(T2, F(f)))
            assert cell.trays.count(T2) == 3
            pick, place = cell.resolve_coordinates(move(F("g7"), T2))
            assert place == cell.config.tray_slots[T2][3]

        run(scenario())

    def test_empty_tray_pick_fails(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=1)
            empties = [f.value for f in GameField if not f.is_tray][:9]
            for f in empties:
                assert (await cell.execute_move(move(T1, F(f))))[0] is StatusCode.GOOD
            with pytest.raises(TrayError):
                cell.resolve_coordinates(move(T1, F("e5")))
            status, payload = await cell.execute_move(move(T1, F("e5")))
            assert status is StatusCode.BAD_INVALID_STATE

        run(scenario())


class TestHeterogeneity:
    def test_different_geometries_same_shadow(self):
        async def scenario():
            a = RobotCell(
                default_cell_config("a", grid_spacing_mm=40.0, kinematics_label="articulated"),
                seed=1,
            )
            b = RobotCell(
                default_cell_config("b", grid_spacing_mm=75.0, kinematics_label="delta"),
                seed=99,
            )
            rng = random.Random(8)
            s = new_session()
            while s.outcome is None and s.move_number < 80:
                ms = sorted(
                    legal_moves(s),
                    key=lambda m: (m.from_field.value, m.to_field.value),
                )
                m = rng.choice(ms)
                s = apply_move(s, m)
                assert (await a.execute_move(m))[0] is StatusCode.GOOD
                assert (await b.execute_move(m))[0] is StatusCode.GOOD
            assert a.board == b.board
            # and both mirror the abstract board exactly
            assert a.board == s.state.board

        run(scenario())


class TestTelemetry:
    def test_durations_within_jitter_band(self):
        async def scenario():
            cfg = default_cell_config("c", sub_phase_duration_ms=2, latency_jitter_ms=2)
            cell = RobotCell(cfg, seed=42)
            from milltwin.vita import parse_timestamp

            for i, f in enumerate(("a1", "a4", "a7", "b2")):
                _, payload = await cell.execute_move(move(T1 if i % 2 == 0 else T2, F(f)))
                for entry in payload["telemetry"]:
                    start = parse_timestamp(entry["started_at"], "t")
                    end = parse_timestamp(entry["ended_at"], "t")
                    dur = (end - start).total_seconds() * 1000
                    assert 0 <= dur <= 4

        run(scenario())

    def test_deviation_sampled_when_configured(self):
        async def scenario():
            cfg = default_cell_config("c", deviation_sigma_mm=0.5)
            cell = RobotCell(cfg, seed=7)
            _, payload = await cell.execute_move(move(T1, F("a1")))
            devs = [e["deviation_mm"] for e in payload["telemetry"]]
            assert len(devs) == 3
            assert all(d >= 0 for d in devs)

        run(scenario())

    def test_deviation_absent_by_default(self):
        async def scenario():
            cell = RobotCell(default_cell_config("c"), seed=7)
            _, payload = await cell.execute_move(move(T1, F("a1")))
            assert all("deviation_mm" not in e for e in payload["telemetry"])

        run(scenario())

    def test_seeded_runs_reproduce(self):
        async def scenario():
            results = []
            for _ in range(2):
                cell = RobotCell(
                    default_cell_config(
                        "c", sub_phase_duration_ms=1, latency_jitter_ms=1, deviation_sigma_mm=0.2
                    ),
                    seed=123,
                )
                _, payload = await cell.execute_move(move(T1, F("a1")))
                results.append(
                    [(e["deviation_mm"]) for e in payload["telemetry"]]
                )
            assert results[0] == results[1]

        run(scenario())
