"""Shared information model: board fields, occupations, moves, status codes.

Every value here is immutable and has a canonical JSON wire form.  The wire
form uses exactly the field names documented on each ``to_wire`` method;
``from_wire`` rejects unknown or missing fields with a path diagnostic so a
bad payload points at the offending element ("board[3].occupation: ...").
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Type, TypeVar


class DecodeError(ValueError):
    """A wire payload violated the documented schema."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


class GameField(Enum):
    """One of the 24 board intersections, or one of the two token trays.

    Board fields use files a..g and ranks 1..7; only the 24 intersections of
    the three concentric squares are valid.  Tray1 stores PlayerOne's tokens,
    Tray2 stores PlayerTwo's (both unplaced and captured ones).
    """

    A1 = "a1"
    A4 = "a4"
    A7 = "a7"
    B2 = "b2"
    B4 = "b4"
    B6 = "b6"
    C3 = "c3"
    C4 = "c4"
    C5 = "c5"
    D1 = "d1"
    D2 = "d2"
    D3 = "d3"
    D5 = "d5"
    D6 = "d6"
    D7 = "d7"
    E3 = "e3"
    E4 = "e4"
    E5 = "e5"
    F2 = "f2"
    F4 = "f4"
    F6 = "f6"
    G1 = "g1"
    G4 = "g4"
    G7 = "g7"
    TRAY1 = "tray1"
    TRAY2 = "tray2"

    @property
    def is_tray(self) -> bool:
        return self is GameField.TRAY1 or self is GameField.TRAY2

    def __str__(self) -> str:
        return self.value


def canonical_field_order() -> tuple[GameField, ...]:
    """The 24 board fields in their fixed array order.

    The order is lexicographic, file then rank (a1, a4, a7, b2, ...), and is
    the layout contract for every serialized board: entry ``i`` of a board
    array always describes ``canonical_field_order()[i]``.  Trays are not
    board fields and never appear here.
    """
    return BOARD_FIELDS


BOARD_FIELDS: tuple[GameField, ...] = tuple(
    f for f in GameField if not f.is_tray
)
FIELD_INDEX: dict[GameField, int] = {f: i for i, f in enumerate(BOARD_FIELDS)}
BOARD_FIELD_COUNT = len(BOARD_FIELDS)
TOKENS_PER_PLAYER = 9
TRAY_SLOTS = 9


class GameFieldOccupationState(Enum):
    """Which player's token, if any, sits on a board field."""

    EMPTY = "Empty"
    PLAYER_ONE = "PlayerOne"
    PLAYER_TWO = "PlayerTwo"


class PlayerRole(Enum):
    """A session participant.  Observers receive updates but never move."""

    PLAYER_ONE = "PlayerOne"
    PLAYER_TWO = "PlayerTwo"
    OBSERVER = "Observer"

    @property
    def is_player(self) -> bool:
        return self is not PlayerRole.OBSERVER


def opponent(role: PlayerRole) -> PlayerRole:
    if role is PlayerRole.PLAYER_ONE:
        return PlayerRole.PLAYER_TWO
    if role is PlayerRole.PLAYER_TWO:
        return PlayerRole.PLAYER_ONE
    raise ValueError("observers have no opponent")


def occupation_of(role: PlayerRole) -> GameFieldOccupationState:
    if role is PlayerRole.PLAYER_ONE:
        return GameFieldOccupationState.PLAYER_ONE
    if role is PlayerRole.PLAYER_TWO:
        return GameFieldOccupationState.PLAYER_TWO
    raise ValueError("observers own no tokens")


def tray_of(role: PlayerRole) -> GameField:
    """The tray holding the given player's tokens."""
    if role is PlayerRole.PLAYER_ONE:
        return GameField.TRAY1
    if role is PlayerRole.PLAYER_TWO:
        return GameField.TRAY2
    raise ValueError("observers have no tray")


def tray_owner(tray: GameField) -> PlayerRole:
    if tray is GameField.TRAY1:
        return PlayerRole.PLAYER_ONE
    if tray is GameField.TRAY2:
        return PlayerRole.PLAYER_TWO
    raise ValueError(f"{tray} is not a tray")


class StatusCode(Enum):
    """Norm-style RPC result code: GOOD or a qualified failure.

    Wire form is the symbolic name; ``numeric`` gives the parallel unsigned
    32-bit form where every failure code has the top (severity) bit set.
    """

    GOOD = "GOOD"
    BAD_INVALID_ARGUMENT = "BAD_INVALID_ARGUMENT"
    BAD_INVALID_STATE = "BAD_INVALID_STATE"
    BAD_NOT_FOUND = "BAD_NOT_FOUND"
    BAD_TIMEOUT = "BAD_TIMEOUT"
    BAD_SESSION_CLOSED = "BAD_SESSION_CLOSED"
    BAD_DEVICE_FAILURE = "BAD_DEVICE_FAILURE"
    BAD_INTERNAL = "BAD_INTERNAL"

    @property
    def numeric(self) -> int:
        return _STATUS_NUMERIC[self]

    @property
    def is_good(self) -> bool:
        return self is StatusCode.GOOD


_STATUS_NUMERIC: dict[StatusCode, int] = {
    StatusCode.GOOD: 0x00000000,
    StatusCode.BAD_INVALID_ARGUMENT: 0x80010000,
    StatusCode.BAD_INVALID_STATE: 0x80020000,
    StatusCode.BAD_NOT_FOUND: 0x80030000,
    StatusCode.BAD_TIMEOUT: 0x80040000,
    StatusCode.BAD_SESSION_CLOSED: 0x80050000,
    StatusCode.BAD_DEVICE_FAILURE: 0x80060000,
    StatusCode.BAD_INTERNAL: 0x80070000,
}


def _extended_field_index(field: GameField) -> int:
    if field is GameField.TRAY1:
        return BOARD_FIELD_COUNT
    if field is GameField.TRAY2:
        return BOARD_FIELD_COUNT + 1
    return FIELD_INDEX[field]


@dataclass(frozen=True)
class GameMove:
    """A production order: carry one token from one field to another.

    Placements come from the mover's tray, captures go to the captured
    player's tray, ordinary moves connect two board fields.
    """

    from_field: GameField
    to_field: GameField

    def __post_init__(self):
        if self.from_field is self.to_field:
            raise ValueError(f"move endpoints must differ, got {self.from_field}")
        # Moves live in sets and index lookups on the engine's hot path;
        # cache the hash and the extended field numbers (board 0..23,
        # Tray1 24, Tray2 25).
        object.__setattr__(
            self, "_hash", hash((self.from_field.value, self.to_field.value))
        )
        object.__setattr__(self, "from_index", _extended_field_index(self.from_field))
        object.__setattr__(self, "to_index", _extended_field_index(self.to_field))

    def __hash__(self) -> int:
        return self._hash  # type: ignore[attr-defined]

    def to_wire(self) -> dict:
        """``{"from": "a1", "to": "a4"}``"""
        return {"from": self.from_field.value, "to": self.to_field.value}

    @classmethod
    def from_wire(cls, obj: Any, path: str = "GameMove") -> "GameMove":
        data = _expect_object(obj, path, {"from", "to"})
        frm = _field_from_wire(data["from"], f"{path}.from")
        to = _field_from_wire(data["to"], f"{path}.to")
        if frm is to:
            raise DecodeError(path, "'from' and 'to' must differ")
        return cls(frm, to)


# All 650 possible moves prebuilt, indexed by extended field number (the 24
# canonical board indexes followed by Tray1, Tray2) so move generation never
# constructs or re-validates move objects.
EXTENDED_FIELDS: tuple[GameField, ...] = BOARD_FIELDS + (
    GameField.TRAY1,
    GameField.TRAY2,
)
EXTENDED_INDEX: dict[GameField, int] = {f: i for i, f in enumerate(EXTENDED_FIELDS)}
TRAY1_INDEX = EXTENDED_INDEX[GameField.TRAY1]
TRAY2_INDEX = EXTENDED_INDEX[GameField.TRAY2]

_MOVE_TABLE: tuple[tuple["GameMove | None", ...], ...] = tuple(
    tuple(GameMove(f, t) if f is not t else None for t in EXTENDED_FIELDS)
    for f in EXTENDED_FIELDS
)


def move(from_field: GameField, to_field: GameField) -> GameMove:
    """Shared GameMove instance for the given endpoints."""
    m = _MOVE_TABLE[EXTENDED_INDEX[from_field]][EXTENDED_INDEX[to_field]]
    if m is None:
        raise ValueError(f"move endpoints must differ, got {from_field}")
    return m


def move_by_index(from_index: int, to_index: int) -> GameMove:
    """Shared GameMove for two extended field indexes (hot path)."""
    m = _MOVE_TABLE[from_index][to_index]
    assert m is not None
    return m


@dataclass(frozen=True)
class GameFieldState:
    """A board field together with its occupation."""

    field: GameField
    occupation: GameFieldOccupationState

    def __post_init__(self):
        if self.field.is_tray:
            raise ValueError("trays carry no occupation state")

    def to_wire(self) -> dict:
        return {"field": self.field.value, "occupation": self.occupation.value}

    @classmethod
    def from_wire(cls, obj: Any, path: str = "GameFieldState") -> "GameFieldState":
        data = _expect_object(obj, path, {"field", "occupation"})
        field = _field_from_wire(data["field"], f"{path}.field")
        if field.is_tray:
            raise DecodeError(f"{path}.field", "trays are not board fields")
        occ = _enum_from_wire(
            GameFieldOccupationState, data["occupation"], f"{path}.occupation"
        )
        return cls(field, occ)


@dataclass(frozen=True)
class GameBoard:
    """All 24 field occupations, stored in canonical field order."""

    occupations: tuple[GameFieldOccupationState, ...]

    def __post_init__(self):
        if len(self.occupations) != BOARD_FIELD_COUNT:
            raise ValueError(
                f"board needs {BOARD_FIELD_COUNT} entries, got {len(self.occupations)}"
            )
        for occ in (
            GameFieldOccupationState.PLAYER_ONE,
            GameFieldOccupationState.PLAYER_TWO,
        ):
            n = self.occupations.count(occ)
            if n > TOKENS_PER_PLAYER:
                raise ValueError(f"{occ.value} has {n} tokens on board, max {TOKENS_PER_PLAYER}")

    @classmethod
    def empty(cls) -> "GameBoard":
        return cls((GameFieldOccupationState.EMPTY,) * BOARD_FIELD_COUNT)

    def occupation(self, field: GameField) -> GameFieldOccupationState:
        return self.occupations[FIELD_INDEX[field]]

    def with_occupation(
        self, field: GameField, occ: GameFieldOccupationState
    ) -> "GameBoard":
        occs = list(self.occupations)
        occs[FIELD_INDEX[field]] = occ
        return GameBoard(tuple(occs))

    def count(self, occ: GameFieldOccupationState) -> int:
        return self.occupations.count(occ)

    def entries(self) -> tuple[GameFieldState, ...]:
        return tuple(
            GameFieldState(f, o) for f, o in zip(BOARD_FIELDS, self.occupations)
        )

    def fields_of(self, occ: GameFieldOccupationState) -> tuple[GameField, ...]:
        return tuple(
            f for f, o in zip(BOARD_FIELDS, self.occupations) if o is occ
        )

    def to_wire(self) -> list:
        """Array of 24 ``GameFieldState`` objects in canonical order."""
        return [e.to_wire() for e in self.entries()]

    @classmethod
    def from_wire(cls, obj: Any, path: str = "GameBoard") -> "GameBoard":
        if not isinstance(obj, list):
            raise DecodeError(path, f"expected array, got {_type_name(obj)}")
        if len(obj) != BOARD_FIELD_COUNT:
            raise DecodeError(path, f"expected {BOARD_FIELD_COUNT} entries, got {len(obj)}")
        occs = []
        for i, entry in enumerate(obj):
            state = GameFieldState.from_wire(entry, f"{path}[{i}]")
            if state.field is not BOARD_FIELDS[i]:
                raise DecodeError(
                    f"{path}[{i}].field",
                    f"expected {BOARD_FIELDS[i].value} at index {i}, got {state.field.value}",
                )
            occs.append(state.occupation)
        try:
            return cls(tuple(occs))
        except ValueError as exc:
            raise DecodeError(path, str(exc)) from None


@dataclass(frozen=True)
class GameState:
    """The published twin state: the board plus the player to move next."""

    board: GameBoard
    next_player: PlayerRole

    def __post_init__(self):
        if not self.next_player.is_player:
            raise ValueError("next player must be PlayerOne or PlayerTwo")

    def to_wire(self) -> dict:
        return {"board": self.board.to_wire(), "next": self.next_player.value}

    @classmethod
    def from_wire(cls, obj: Any, path: str = "GameState") -> "GameState":
        data = _expect_object(obj, path, {"board", "next"})
        board = GameBoard.from_wire(data["board"], f"{path}.board")
        nxt = _enum_from_wire(PlayerRole, data["next"], f"{path}.next")
        if not nxt.is_player:
            raise DecodeError(f"{path}.next", "observers cannot be next to move")
        return cls(board, nxt)


ModelValue = TypeVar("ModelValue")

_WIRE_CLASSES = (GameMove, GameFieldState, GameBoard, GameState)


def encode(value: Any) -> str:
    """Canonical UTF-8 JSON text for any model value."""
    if isinstance(value, Enum):
        wire: Any = value.value
    elif isinstance(value, _WIRE_CLASSES) or hasattr(value, "to_wire"):
        wire = value.to_wire()
    else:
        raise TypeError(f"not a model value: {type(value).__name__}")
    return json.dumps(wire, separators=(",", ":"), ensure_ascii=False)


def decode(text: str, cls: Type[ModelValue]) -> ModelValue:
    """Parse canonical JSON text back into the given model type."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(cls.__name__, f"invalid JSON: {exc}") from None
    return from_wire(obj, cls)


def from_wire(obj: Any, cls: Type[ModelValue], path: str | None = None) -> ModelValue:
    """Decode an already-parsed JSON value into the given model type."""
    path = path or cls.__name__
    if issubclass(cls, Enum):
        if cls is GameField:
            return _field_from_wire(obj, path)  # type: ignore[return-value]
        return _enum_from_wire(cls, obj, path)  # type: ignore[type-var]
    decoder = getattr(cls, "from_wire", None)
    if decoder is None:
        raise TypeError(f"not a decodable model type: {cls.__name__}")
    return decoder(obj, path)


def _type_name(obj: Any) -> str:
    return {dict: "object", list: "array"}.get(type(obj), type(obj).__name__)


def _expect_object(
    obj: Any, path: str, required: set[str], optional: Iterable[str] = ()
) -> dict:
    if not isinstance(obj, dict):
        raise DecodeError(path, f"expected object, got {_type_name(obj)}")
    allowed = required | set(optional)
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise DecodeError(path, f"unknown field(s): {', '.join(unknown)}")
    missing = sorted(required - set(obj))
    if missing:
        raise DecodeError(path, f"missing field(s): {', '.join(missing)}")
    return obj


_FIELD_BY_NAME = {f.value: f for f in GameField}


def _field_from_wire(obj: Any, path: str) -> GameField:
    # Field identifiers decode case-insensitively ("A1" == "a1").
    if not isinstance(obj, str):
        raise DecodeError(path, f"expected field name string, got {_type_name(obj)}")
    field = _FIELD_BY_NAME.get(obj.lower())
    if field is None:
        raise DecodeError(path, f"unknown field {obj!r}")
    return field


EnumT = TypeVar("EnumT", bound=Enum)


def _enum_from_wire(cls: Type[EnumT], obj: Any, path: str) -> EnumT:
    if not isinstance(obj, str):
        raise DecodeError(path, f"expected string, got {_type_name(obj)}")
    try:
        return cls(obj)
    except ValueError:
        raise DecodeError(path, f"unknown {cls.__name__} {obj!r}") from None
