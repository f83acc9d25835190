"""Lifecycle telemetry: one record per execution sub-phase per unit.

Every production order run on a unit decomposes into the three sub-phases
of physically carrying a token (pick up, move, place); each yields one
record with millisecond timestamps, the RPC status, and the simulated
positioning deviation when the cell reports one.  Records append to a
newline-delimited JSON file, one record per line, UTF-8.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from .model import DecodeError, GameMove, StatusCode, _enum_from_wire, _expect_object

log = logging.getLogger(__name__)


class SubPhase(Enum):
    PICK_UP = "PickUp"
    MOVE_TOKEN = "MoveToken"
    PLACE_TOKEN = "PlaceToken"


SUB_PHASES = (SubPhase.PICK_UP, SubPhase.MOVE_TOKEN, SubPhase.PLACE_TOKEN)


def utc_now_ms() -> datetime:
    """Current UTC time truncated to millisecond precision."""
    now = datetime.now(timezone.utc)
    return now.replace(microsecond=now.microsecond // 1000 * 1000)


def format_timestamp(dt: datetime) -> str:
    if dt.tzinfo is None:
        raise ValueError("timestamps must be timezone-aware")
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(text: str, path: str) -> datetime:
    try:
        naive = datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ")
    except (ValueError, TypeError):
        raise DecodeError(path, f"bad timestamp {text!r}") from None
    return naive.replace(tzinfo=timezone.utc)


@dataclass(frozen=True)
class VitaRecord:
    """One sub-phase of one order on one production unit."""

    order_id: int
    unit: str
    move: GameMove
    sub_phase: SubPhase
    started_at: datetime
    ended_at: datetime
    status: StatusCode
    deviation_mm: float | None = None

    def __post_init__(self):
        if self.ended_at < self.started_at:
            raise ValueError("record ends before it starts")
        if self.deviation_mm is not None and (
            self.deviation_mm < 0 or math.isnan(self.deviation_mm)
        ):
            raise ValueError("deviation must be a non-negative number")

    @property
    def duration_ms(self) -> float:
        return (self.ended_at - self.started_at).total_seconds() * 1000.0

    def to_wire(self) -> dict:
        out = {
            "order_id": self.order_id,
            "unit": self.unit,
            "move": self.move.to_wire(),
            "sub_phase": self.sub_phase.value,
            "started_at": format_timestamp(self.started_at),
            "ended_at": format_timestamp(self.ended_at),
            "status": self.status.value,
        }
        if self.deviation_mm is not None:
            out["deviation_mm"] = self.deviation_mm
        return out

    @classmethod
    def from_wire(cls, obj: Any, path: str = "VitaRecord") -> "VitaRecord":
        data = _expect_object(
            obj,
            path,
            {"order_id", "unit", "move", "sub_phase", "started_at", "ended_at", "status"},
            {"deviation_mm"},
        )
        order_id = data["order_id"]
        if not isinstance(order_id, int) or isinstance(order_id, bool) or order_id < 0:
            raise DecodeError(f"{path}.order_id", "expected non-negative integer")
        unit = data["unit"]
        if not isinstance(unit, str) or not unit:
            raise DecodeError(f"{path}.unit", "expected non-empty string")
        deviation = data.get("deviation_mm")
        if deviation is not None and not isinstance(deviation, (int, float)):
            raise DecodeError(f"{path}.deviation_mm", "expected number")
        try:
            return cls(
                order_id=order_id,
                unit=unit,
                move=GameMove.from_wire(data["move"], f"{path}.move"),
                sub_phase=_enum_from_wire(SubPhase, data["sub_phase"], f"{path}.sub_phase"),
                started_at=parse_timestamp(data["started_at"], f"{path}.started_at"),
                ended_at=parse_timestamp(data["ended_at"], f"{path}.ended_at"),
                status=_enum_from_wire(StatusCode, data["status"], f"{path}.status"),
                deviation_mm=float(deviation) if deviation is not None else None,
            )
        except ValueError as exc:
            if isinstance(exc, DecodeError):
                raise
            raise DecodeError(path, str(exc)) from None


class VitaLogError(ValueError):
    """A log line violated the record schema."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class VitaLog:
    """Append-only newline-delimited JSON record sink.

    Telemetry must never take the business process down: IO failures are
    logged and swallowed.  ``fsync`` trades durability for latency.
    """

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self._fsync = fsync
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, "a", encoding="utf-8")

    def append(self, record: VitaRecord) -> bool:
        """True if the record reached the file."""
        try:
            self._file.write(json.dumps(record.to_wire(), separators=(",", ":")) + "\n")
            self._file.flush()
            if self._fsync:
                os.fsync(self._file.fileno())
            return True
        except (OSError, ValueError) as exc:  # ValueError: writing a closed file
            log.error("vita log write failed: %s", exc)
            return False

    def close(self) -> None:
        try:
            self._file.flush()
            self._file.close()
        except OSError as exc:
            log.error("vita log close failed: %s", exc)


def read_vita_log(path: str | Path) -> Iterator[VitaRecord]:
    """Yield all records; VitaLogError carries the offending line number."""
    with open(path, encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise VitaLogError(line_number, f"malformed JSON: {exc}") from None
            try:
                yield VitaRecord.from_wire(obj)
            except DecodeError as exc:
                raise VitaLogError(line_number, str(exc)) from None


@dataclass
class PhaseStats:
    count: int = 0
    total_duration_ms: float = 0.0
    max_duration_ms: float = 0.0
    deviation_sum: float = 0.0
    deviation_count: int = 0

    @property
    def mean_duration_ms(self) -> float:
        return self.total_duration_ms / self.count if self.count else 0.0

    @property
    def mean_deviation_mm(self) -> float | None:
        if self.deviation_count == 0:
            return None
        return self.deviation_sum / self.deviation_count


@dataclass
class VitaStats:
    """Aggregates the stats CLI prints and the report renders."""

    total_records: int
    orders: int
    per_phase: dict[SubPhase, PhaseStats]
    failures_by_unit: dict[str, int]
    records_by_unit: dict[str, int]

    @classmethod
    def from_records(cls, records) -> "VitaStats":
        per_phase = {phase: PhaseStats() for phase in SUB_PHASES}
        failures: dict[str, int] = {}
        by_unit: dict[str, int] = {}
        orders: set[int] = set()
        total = 0
        for r in records:
            total += 1
            orders.add(r.order_id)
            by_unit[r.unit] = by_unit.get(r.unit, 0) + 1
            if r.status.is_good:
                stats = per_phase[r.sub_phase]
                stats.count += 1
                stats.total_duration_ms += r.duration_ms
                stats.max_duration_ms = max(stats.max_duration_ms, r.duration_ms)
                if r.deviation_mm is not None:
                    stats.deviation_sum += r.deviation_mm
                    stats.deviation_count += 1
            else:
                failures[r.unit] = failures.get(r.unit, 0) + 1
        return cls(
            total_records=total,
            orders=len(orders),
            per_phase=per_phase,
            failures_by_unit=failures,
            records_by_unit=by_unit,
        )
