"""Simulated production unit: executes game moves as timed pick/move/place
motions against a local board shadow.

A cell never understands game rules.  It resolves the two abstract move
endpoints to concrete coordinates (tray endpoints through its own slot
bookkeeping), checks the order against its board shadow, burns the
configured per-phase time, and reports telemetry inline in the RPC
response.  Heterogeneity lives entirely in the config: two cells with
different geometries driven by the same moves end in identical shadows.

Fault injection is scripted per call ordinal: a ``device_failure`` entry
makes that call fail outright; a ``timeout`` entry stalls for ``stall_ms``
without touching the shadow and then reports BAD_TIMEOUT itself (the
server's own deadline usually fires first).
"""

from __future__ import annotations

import asyncio
import json
import logging
import random
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Any

from .model import (
    BOARD_FIELDS,
    GameBoard,
    GameField,
    GameFieldOccupationState,
    GameMove,
    StatusCode,
    TRAY_SLOTS,
    occupation_of,
    tray_owner,
)
from .protocol import PeerIdentity, PeerRole
from .topology import GRID_POSITION
from .transport import Connection, connect_any
from .vita import SUB_PHASES, SubPhase, format_timestamp, utc_now_ms

log = logging.getLogger(__name__)

EMPTY = GameFieldOccupationState.EMPTY

FAULT_KINDS = ("device_failure", "timeout")

Coordinate = tuple[float, float, float]


@dataclass(frozen=True)
class FaultSpec:
    """One scripted failure: which call of which operation misbehaves."""

    op: str  # "executeMove" | "reset"
    ordinal: int  # 1-based call count within that operation
    kind: str  # "device_failure" | "timeout"
    stall_ms: int = 60_000

    def __post_init__(self):
        if self.op not in ("executeMove", "reset"):
            raise ValueError(f"unknown fault op {self.op!r}")
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")
        if self.ordinal < 1:
            raise ValueError("fault ordinal is 1-based")


@dataclass(frozen=True)
class CellConfig:
    """Everything cell-local: geometry, timing, faults, deviation model.

    Durations and jitter are integer milliseconds; reported sub-phase
    durations are always within [base - jitter, base + jitter] (clamped at
    zero).
    """

    name: str
    kinematics_label: str = "articulated"
    field_coordinates: dict[GameField, Coordinate] = field(default_factory=dict)
    tray_slots: dict[GameField, tuple[Coordinate, ...]] = field(default_factory=dict)
    sub_phase_duration_ms: dict[SubPhase, int] = field(
        default_factory=lambda: {phase: 0 for phase in SUB_PHASES}
    )
    latency_jitter_ms: int = 0
    fault_plan: tuple[FaultSpec, ...] = ()
    deviation_sigma_mm: float | None = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("cell name must be non-empty")
        missing = [f.value for f in BOARD_FIELDS if f not in self.field_coordinates]
        if missing:
            raise ValueError(f"field coordinates missing for: {', '.join(missing)}")
        for tray in (GameField.TRAY1, GameField.TRAY2):
            slots = self.tray_slots.get(tray, ())
            if len(slots) != TRAY_SLOTS:
                raise ValueError(f"{tray.value} needs {TRAY_SLOTS} slots")
        for phase in SUB_PHASES:
            if self.sub_phase_duration_ms.get(phase, -1) < 0:
                raise ValueError(f"duration for {phase.value} must be >= 0")
        if self.latency_jitter_ms < 0:
            raise ValueError("jitter must be >= 0")
        if self.deviation_sigma_mm is not None and self.deviation_sigma_mm < 0:
            raise ValueError("deviation sigma must be >= 0")


def default_cell_config(
    name: str,
    kinematics_label: str = "articulated",
    grid_spacing_mm: float = 50.0,
    sub_phase_duration_ms: int = 0,
    latency_jitter_ms: int = 0,
    fault_plan: tuple[FaultSpec, ...] = (),
    deviation_sigma_mm: float | None = None,
) -> CellConfig:
    """Plausible geometry: board fields on a grid, trays parked beside it."""
    coords = {
        f: (col * grid_spacing_mm, row * grid_spacing_mm, 0.0)
        for f, (col, row) in GRID_POSITION.items()
    }
    slot_pitch = grid_spacing_mm * 0.8
    trays = {
        GameField.TRAY1: tuple(
            (-2 * grid_spacing_mm, i * slot_pitch, 0.0) for i in range(TRAY_SLOTS)
        ),
        GameField.TRAY2: tuple(
            (8 * grid_spacing_mm, i * slot_pitch, 0.0) for i in range(TRAY_SLOTS)
        ),
    }
    return CellConfig(
        name=name,
        kinematics_label=kinematics_label,
        field_coordinates=coords,
        tray_slots=trays,
        sub_phase_duration_ms={phase: sub_phase_duration_ms for phase in SUB_PHASES},
        latency_jitter_ms=latency_jitter_ms,
        fault_plan=fault_plan,
        deviation_sigma_mm=deviation_sigma_mm,
    )


def load_cell_config(path: str | Path) -> CellConfig:
    """Read the documented JSON config schema; raises ValueError on problems."""
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    return cell_config_from_json(raw)


def cell_config_from_json(raw: Any) -> CellConfig:
    if not isinstance(raw, dict):
        raise ValueError("cell config must be a JSON object")
    known = {
        "name",
        "kinematics_label",
        "field_coordinates",
        "tray_slots",
        "sub_phase_duration_ms",
        "latency_jitter_ms",
        "fault_plan",
        "deviation_sigma_mm",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def coordinate(value, label) -> Coordinate:
        if (
            not isinstance(value, (list, tuple))
            or len(value) != 3
            or not all(isinstance(c, (int, float)) for c in value)
        ):
            raise ValueError(f"{label}: expected [x, y, z] numbers")
        return (float(value[0]), float(value[1]), float(value[2]))

    coords = {}
    for key, value in raw.get("field_coordinates", {}).items():
        coords[GameField(key.lower())] = coordinate(value, f"field_coordinates.{key}")
    trays = {}
    for key, slots in raw.get("tray_slots", {}).items():
        tray = GameField(key.lower())
        trays[tray] = tuple(
            coordinate(s, f"tray_slots.{key}[{i}]") for i, s in enumerate(slots)
        )
    durations_raw = raw.get("sub_phase_duration_ms", 0)
    if isinstance(durations_raw, (int, float)):
        durations = {phase: int(durations_raw) for phase in SUB_PHASES}
    elif isinstance(durations_raw, dict):
        durations = {
            phase: int(durations_raw.get(phase.value, 0)) for phase in SUB_PHASES
        }
    else:
        raise ValueError("sub_phase_duration_ms must be a number or per-phase object")
    faults = []
    for i, entry in enumerate(raw.get("fault_plan", [])):
        if not isinstance(entry, dict):
            raise ValueError(f"fault_plan[{i}] must be an object")
        faults.append(
            FaultSpec(
                op=entry.get("op", "executeMove"),
                ordinal=entry.get("ordinal", 0),
                kind=entry.get("kind", ""),
                stall_ms=int(entry.get("stall_ms", 60_000)),
            )
        )
    sigma = raw.get("deviation_sigma_mm")
    return CellConfig(
        name=raw.get("name", ""),
        kinematics_label=raw.get("kinematics_label", "articulated"),
        field_coordinates=coords,
        tray_slots=trays,
        sub_phase_duration_ms=durations,
        latency_jitter_ms=int(raw.get("latency_jitter_ms", 0)),
        fault_plan=tuple(faults),
        deviation_sigma_mm=float(sigma) if sigma is not None else None,
    )


def cell_config_to_json(config: CellConfig) -> dict:
    return {
        "name": config.name,
        "kinematics_label": config.kinematics_label,
        "field_coordinates": {
            f.value: list(xyz) for f, xyz in config.field_coordinates.items()
        },
        "tray_slots": {
            tray.value: [list(xyz) for xyz in slots]
            for tray, slots in config.tray_slots.items()
        },
        "sub_phase_duration_ms": {
            phase.value: ms for phase, ms in config.sub_phase_duration_ms.items()
        },
        "latency_jitter_ms": config.latency_jitter_ms,
        "fault_plan": [
            {"op": f.op, "ordinal": f.ordinal, "kind": f.kind, "stall_ms": f.stall_ms}
            for f in config.fault_plan
        ],
        "deviation_sigma_mm": config.deviation_sigma_mm,
    }


class TrayError(ValueError):
    """Tray endpoint cannot be resolved (empty pick or full drop)."""


class TrayState:
    """Slot occupancy per tray: tokens picked from the highest occupied slot,
    dropped into the lowest free one."""

    def __init__(self):
        self._slots: dict[GameField, list[bool]] = {
            GameField.TRAY1: [True] * TRAY_SLOTS,
            GameField.TRAY2: [True] * TRAY_SLOTS,
        }

    def count(self, tray: GameField) -> int:
        return sum(self._slots[tray])

    def refill(self) -> None:
        for slots in self._slots.values():
            slots[:] = [True] * TRAY_SLOTS

    def pick_slot(self, tray: GameField) -> int:
        slots = self._slots[tray]
        for i in range(TRAY_SLOTS - 1, -1, -1):
            if slots[i]:
                return i
        raise TrayError(f"{tray.value} is empty")

    def place_slot(self, tray: GameField) -> int:
        slots = self._slots[tray]
        for i in range(TRAY_SLOTS):
            if not slots[i]:
                return i
        raise TrayError(f"{tray.value} is full")

    def take(self, tray: GameField) -> int:
        slot = self.pick_slot(tray)
        self._slots[tray][slot] = False
        return slot

    def put(self, tray: GameField) -> int:
        slot = self.place_slot(tray)
        self._slots[tray][slot] = True
        return slot


class RobotCell:
    """One simulated cell; processes one motion at a time (FIFO)."""

    def __init__(self, config: CellConfig, seed: int | None = None):
        self.config = config
        self.board = GameBoard.empty()
        self.trays = TrayState()
        self._rng = random.Random(seed)
        self._lock = asyncio.Lock()
        self._ordinals = {"executeMove": 0, "reset": 0}

    @property
    def name(self) -> str:
        return self.config.name

    def board_tokens(self) -> int:
        return 24 - self.board.count(EMPTY)

    def tray_tokens(self) -> int:
        return self.trays.count(GameField.TRAY1) + self.trays.count(GameField.TRAY2)

    def _fault_for(self, op: str) -> FaultSpec | None:
        ordinal = self._ordinals[op]
        for spec in self.config.fault_plan:
            if spec.op == op and spec.ordinal == ordinal:
                return spec
        return None

    def resolve_coordinates(self, m: GameMove) -> tuple[Coordinate, Coordinate]:
        """Concrete pick and place points for a move, without executing it."""
        if m.from_field.is_tray:
            pick = self.config.tray_slots[m.from_field][
                self.trays.pick_slot(m.from_field)
            ]
        else:
            pick = self.config.field_coordinates[m.from_field]
        if m.to_field.is_tray:
            place = self.config.tray_slots[m.to_field][
                self.trays.place_slot(m.to_field)
            ]
        else:
            place = self.config.field_coordinates[m.to_field]
        return pick, place

    def _shadow_check(self, m: GameMove) -> str | None:
        """None when the move is consistent with the local shadow."""
        if m.from_field.is_tray and m.to_field.is_tray:
            return "tray-to-tray transfers are not a cell motion"
        if m.from_field.is_tray:
            if self.trays.count(m.from_field) == 0:
                return f"{m.from_field.value} is empty"
            if self.board.occupation(m.to_field) is not EMPTY:
                return f"{m.to_field.value} is occupied"
            return None
        source = self.board.occupation(m.from_field)
        if source is EMPTY:
            return f"{m.from_field.value} is empty"
        if m.to_field.is_tray:
            if occupation_of(tray_owner(m.to_field)) is not source:
                return f"token on {m.from_field.value} does not belong in {m.to_field.value}"
            if self.trays.count(m.to_field) >= TRAY_SLOTS:
                return f"{m.to_field.value} is full"
            return None
        if self.board.occupation(m.to_field) is not EMPTY:
            return f"{m.to_field.value} is occupied"
        return None

    def _apply_shadow(self, m: GameMove) -> None:
        if m.from_field.is_tray:
            self.trays.take(m.from_field)
            color = occupation_of(tray_owner(m.from_field))
            self.board = self.board.with_occupation(m.to_field, color)
        elif m.to_field.is_tray:
            self.trays.put(m.to_field)
            self.board = self.board.with_occupation(m.from_field, EMPTY)
        else:
            color = self.board.occupation(m.from_field)
            self.board = self.board.with_occupation(
                m.from_field, EMPTY
            ).with_occupation(m.to_field, color)

    def _sample_duration_ms(self, phase: SubPhase) -> int:
        base = self.config.sub_phase_duration_ms[phase]
        jitter = self.config.latency_jitter_ms
        low = max(0, base - jitter)
        high = base + jitter
        return self._rng.randint(low, high) if high > low else high

    async def execute_move(self, m: GameMove) -> tuple[StatusCode, Any]:
        """Run the three motion sub-phases; telemetry rides in the payload."""
        async with self._lock:
            self._ordinals["executeMove"] += 1
            fault = self._fault_for("executeMove")
            if fault is not None:
                if fault.kind == "timeout":
                    await asyncio.sleep(fault.stall_ms / 1000.0)
                    return (StatusCode.BAD_TIMEOUT, None)
                return (StatusCode.BAD_DEVICE_FAILURE, None)
            problem = self._shadow_check(m)
            if problem is not None:
                log.warning("%s: rejecting %s: %s", self.name, m, problem)
                return (StatusCode.BAD_INVALID_STATE, {"reason": problem})
            pick, place = self.resolve_coordinates(m)
            telemetry = []
            cursor = utc_now_ms()
            for phase in SUB_PHASES:
                duration_ms = self._sample_duration_ms(phase)
                if duration_ms:
                    await asyncio.sleep(duration_ms / 1000.0)
                entry: dict[str, Any] = {
                    "sub_phase": phase.value,
                    "started_at": format_timestamp(cursor),
                }
                cursor = cursor + timedelta(milliseconds=duration_ms)
                entry["ended_at"] = format_timestamp(cursor)
                if self.config.deviation_sigma_mm is not None:
                    entry["deviation_mm"] = round(
                        abs(self._rng.gauss(0.0, self.config.deviation_sigma_mm)), 4
                    )
                telemetry.append(entry)
            self._apply_shadow(m)
            return (
                StatusCode.GOOD,
                {
                    "board": self.board.to_wire(),
                    "telemetry": telemetry,
                    "pick": list(pick),
                    "place": list(place),
                },
            )

    async def reset(self) -> tuple[StatusCode, Any]:
        """Empty board, both trays full; idempotent."""
        async with self._lock:
            self._ordinals["reset"] += 1
            fault = self._fault_for("reset")
            if fault is not None:
                if fault.kind == "timeout":
                    await asyncio.sleep(fault.stall_ms / 1000.0)
                    return (StatusCode.BAD_TIMEOUT, None)
                return (StatusCode.BAD_DEVICE_FAILURE, None)
            self.board = GameBoard.empty()
            self.trays.refill()
            return (StatusCode.GOOD, {"board": self.board.to_wire()})


class CellClient:
    """Network wrapper: registers the cell and serves its reverse RPCs."""

    def __init__(self, cell: RobotCell, server_address: str, **connection_kwargs):
        self.cell = cell
        self.server_address = server_address
        self._connection_kwargs = connection_kwargs
        self.connection: Connection | None = None

    async def _handle_request(
        self, conn: Connection, method: str, payload: Any
    ) -> tuple[StatusCode, Any]:
        if method == "executeMove":
            try:
                m = GameMove.from_wire(payload)
            except Exception as exc:
                log.warning("%s: bad executeMove payload: %s", self.cell.name, exc)
                return (StatusCode.BAD_INVALID_ARGUMENT, None)
            return await self.cell.execute_move(m)
        if method == "reset":
            return await self.cell.reset()
        return (StatusCode.BAD_NOT_FOUND, None)

    async def start(self) -> StatusCode:
        """Connect, register as a production unit, begin serving."""
        self.connection = await connect_any(
            self.server_address,
            on_request=self._handle_request,
            **self._connection_kwargs,
        )
        status = await self.connection.send_hello(
            PeerIdentity(PeerRole.PRODUCTION_UNIT, self.cell.name)
        )
        if not status.is_good:
            await self.connection.close()
        return status

    async def run_until_closed(self) -> None:
        if self.connection is not None:
            await self.connection.wait_closed()

    async def close(self) -> None:
        if self.connection is not None:
            await self.connection.close()


async def run_cell(
    config: CellConfig, server_address: str, seed: int | None = None, **kwargs
) -> None:
    """One cell process: serve until the connection goes away."""
    client = CellClient(RobotCell(config, seed=seed), server_address, **kwargs)
    status = await client.start()
    if not status.is_good:
        raise RuntimeError(f"cell registration rejected: {status.value}")
    log.info("cell %s registered with %s", config.name, server_address)
    await client.run_until_closed()
