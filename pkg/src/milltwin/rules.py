"""Game rules: legality, phases, mills, captures, and termination.

The engine is a set of pure functions over immutable ``SessionInfo`` values.
Captures reuse the two-field move shape: after a mill, the same player must
submit one more move carrying an opponent token from the board to the
opponent's tray.

Rule set (standard nine-token game):
  * nine tokens per player; place from the tray, then slide along lines,
    then move anywhere ("flying") once exactly three tokens remain;
  * completing a mill obliges exactly one capture; tokens inside mills are
    protected unless no loose token exists;
  * a player loses when reduced below three tokens after placement is done,
    or when blocked with no legal move on their turn;
  * a game is drawn after ``draw_threshold`` consecutive sliding/flying
    moves without any mill or capture.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .model import (
    BOARD_FIELD_COUNT,
    DecodeError,
    GameBoard,
    GameFieldOccupationState,
    GameMove,
    GameState,
    PlayerRole,
    StatusCode,
    TOKENS_PER_PLAYER,
    TRAY1_INDEX,
    TRAY2_INDEX,
    _enum_from_wire,
    _expect_object,
    occupation_of,
    opponent,
)
from .model import _MOVE_TABLE as _MOVES_FROM
from .topology import ADJACENT_INDEXES, MILL_PARTNER_INDEXES

DEFAULT_DRAW_THRESHOLD = 50

_EMPTY = GameFieldOccupationState.EMPTY
_PLAYERS = (PlayerRole.PLAYER_ONE, PlayerRole.PLAYER_TWO)


def _tray_index(role: PlayerRole) -> int:
    return TRAY1_INDEX if role is PlayerRole.PLAYER_ONE else TRAY2_INDEX


class Phase(Enum):
    PLACEMENT = "Placement"
    MOVEMENT = "Movement"
    FLYING = "Flying"


class Outcome(Enum):
    WIN_PLAYER_ONE = "WinPlayerOne"
    WIN_PLAYER_TWO = "WinPlayerTwo"
    DRAW = "Draw"


def win_for(role: PlayerRole) -> Outcome:
    return (
        Outcome.WIN_PLAYER_ONE
        if role is PlayerRole.PLAYER_ONE
        else Outcome.WIN_PLAYER_TWO
    )


class IllegalMoveError(ValueError):
    """apply_move was asked to perform a move that validate rejects."""

    def __init__(self, status: StatusCode, message: str):
        super().__init__(f"{status.value}: {message}")
        self.status = status


def _player_index(role: PlayerRole) -> int:
    return 0 if role is PlayerRole.PLAYER_ONE else 1


@dataclass(frozen=True)
class SessionInfo:
    """Full bookkeeping for one game session.

    ``state`` is the published board-plus-turn pair; the remaining fields
    are derived bookkeeping: per-player token counters, the capture
    obligation, and termination tracking.  ``pending_capture`` names the
    player whose token must be removed next (always the opponent of
    ``state.next_player``).  Counter tuples are ordered (PlayerOne,
    PlayerTwo).
    """

    state: GameState
    tray_unplaced: tuple[int, int]
    captured: tuple[int, int]
    pending_capture: PlayerRole | None
    move_number: int
    quiet_moves: int
    outcome: Outcome | None
    draw_threshold: int = DEFAULT_DRAW_THRESHOLD

    def tray_count(self, role: PlayerRole) -> int:
        return self.tray_unplaced[_player_index(role)]

    def captured_count(self, role: PlayerRole) -> int:
        return self.captured[_player_index(role)]

    def on_board(self, role: PlayerRole) -> int:
        return self.state.board.count(occupation_of(role))

    def phase(self, role: PlayerRole) -> Phase:
        if self.tray_count(role) > 0:
            return Phase.PLACEMENT
        if self.on_board(role) == 3:
            return Phase.FLYING
        return Phase.MOVEMENT

    def to_wire(self) -> dict:
        return {
            "state": self.state.to_wire(),
            "phase": {r.value: self.phase(r).value for r in _PLAYERS},
            "pending_capture": None
            if self.pending_capture is None
            else self.pending_capture.value,
            "tray_unplaced": {
                r.value: self.tray_count(r) for r in _PLAYERS
            },
            "captured": {r.value: self.captured_count(r) for r in _PLAYERS},
            "move_number": self.move_number,
            "quiet_moves": self.quiet_moves,
            "outcome": None if self.outcome is None else self.outcome.value,
            "draw_threshold": self.draw_threshold,
        }

    @classmethod
    def from_wire(cls, obj: Any, path: str = "SessionInfo") -> "SessionInfo":
        data = _expect_object(
            obj,
            path,
            {
                "state",
                "phase",
                "pending_capture",
                "tray_unplaced",
                "captured",
                "move_number",
                "quiet_moves",
                "outcome",
                "draw_threshold",
            },
        )
        state = GameState.from_wire(data["state"], f"{path}.state")
        tray = _per_player_counts(data["tray_unplaced"], f"{path}.tray_unplaced")
        captured = _per_player_counts(data["captured"], f"{path}.captured")
        pending = data["pending_capture"]
        if pending is not None:
            pending = _enum_from_wire(PlayerRole, pending, f"{path}.pending_capture")
        outcome = data["outcome"]
        if outcome is not None:
            outcome = _enum_from_wire(Outcome, outcome, f"{path}.outcome")
        for key in ("move_number", "quiet_moves", "draw_threshold"):
            if not isinstance(data[key], int) or isinstance(data[key], bool) or data[key] < 0:
                raise DecodeError(f"{path}.{key}", "expected a non-negative integer")
        session = cls(
            state=state,
            tray_unplaced=tray,
            captured=captured,
            pending_capture=pending,
            move_number=data["move_number"],
            quiet_moves=data["quiet_moves"],
            outcome=outcome,
            draw_threshold=data["draw_threshold"],
        )
        for role in _PLAYERS:
            total = session.tray_count(role) + session.captured_count(role) + session.on_board(role)
            if total != TOKENS_PER_PLAYER:
                raise DecodeError(
                    path, f"{role.value} accounts for {total} tokens, expected {TOKENS_PER_PLAYER}"
                )
        phases = _expect_object(
            data["phase"], f"{path}.phase", {r.value for r in _PLAYERS}
        )
        for role in _PLAYERS:
            stated = phases[role.value]
            if stated != session.phase(role).value:
                raise DecodeError(
                    f"{path}.phase.{role.value}",
                    f"inconsistent phase {stated!r}, derived {session.phase(role).value!r}",
                )
        return session


def _per_player_counts(obj: Any, path: str) -> tuple[int, int]:
    data = _expect_object(obj, path, {r.value for r in _PLAYERS})
    counts = []
    for role in _PLAYERS:
        n = data[role.value]
        if not isinstance(n, int) or isinstance(n, bool) or not 0 <= n <= TOKENS_PER_PLAYER:
            raise DecodeError(f"{path}.{role.value}", f"expected count in 0..{TOKENS_PER_PLAYER}")
        counts.append(n)
    return (counts[0], counts[1])


def new_session(draw_threshold: int = DEFAULT_DRAW_THRESHOLD) -> SessionInfo:
    """Fresh session: empty board, PlayerOne to place first."""
    if draw_threshold < 1:
        raise ValueError("draw threshold must be positive")
    return SessionInfo(
        state=GameState(GameBoard.empty(), PlayerRole.PLAYER_ONE),
        tray_unplaced=(TOKENS_PER_PLAYER, TOKENS_PER_PLAYER),
        captured=(0, 0),
        pending_capture=None,
        move_number=0,
        quiet_moves=0,
        outcome=None,
        draw_threshold=draw_threshold,
    )


def _completes_mill(
    occs: tuple[GameFieldOccupationState, ...] | list[GameFieldOccupationState],
    index: int,
    occ: GameFieldOccupationState,
) -> bool:
    for a, b in MILL_PARTNER_INDEXES[index]:
        if occs[a] is occ and occs[b] is occ:
            return True
    return False


def legal_moves(s: SessionInfo) -> set[GameMove]:
    """Every move validate would accept for the player to move."""
    if s.outcome is not None:
        return set()
    mover = s.state.next_player
    occs = s.state.board.occupations
    table = _MOVES_FROM
    if s.pending_capture is not None:
        victim_occ = occupation_of(s.pending_capture)
        on_board = [i for i, o in enumerate(occs) if o is victim_occ]
        loose = [i for i in on_board if not _completes_mill(occs, i, victim_occ)]
        tray = _tray_index(s.pending_capture)
        return {table[i][tray] for i in (loose or on_board)}
    if s.tray_count(mover) > 0:
        row = table[_tray_index(mover)]
        return {row[i] for i, o in enumerate(occs) if o is _EMPTY}
    mine_occ = occupation_of(mover)
    mine = [i for i, o in enumerate(occs) if o is mine_occ]
    if len(mine) == 3:  # flying
        return {
            table[i][j] for i in mine for j, o in enumerate(occs) if o is _EMPTY
        }
    out = set()
    for i in mine:
        row = table[i]
        for j in ADJACENT_INDEXES[i]:
            if occs[j] is _EMPTY:
                out.add(row[j])
    return out


def _has_any_move(s: SessionInfo) -> bool:
    if s.outcome is not None:
        return False
    mover = s.state.next_player
    occs = s.state.board.occupations
    if s.pending_capture is not None:
        victim_occ = occupation_of(s.pending_capture)
        return any(o is victim_occ for o in occs)
    if s.tray_count(mover) > 0:
        return any(o is _EMPTY for o in occs)
    mine_occ = occupation_of(mover)
    mine = [i for i, o in enumerate(occs) if o is mine_occ]
    if len(mine) == 3:
        return any(o is _EMPTY for o in occs)
    return any(
        occs[j] is _EMPTY for i in mine for j in ADJACENT_INDEXES[i]
    )


def _is_legal(s: SessionInfo, m: GameMove) -> bool:
    """Membership test equivalent to ``m in legal_moves(s)``, without
    enumerating (the equivalence is pinned by an exhaustive test)."""
    occs = s.state.board.occupations
    mover = s.state.next_player
    i, j = m.from_index, m.to_index
    if s.pending_capture is not None:
        victim = s.pending_capture
        if j != _tray_index(victim) or i >= BOARD_FIELD_COUNT:
            return False
        victim_occ = occupation_of(victim)
        if occs[i] is not victim_occ:
            return False
        if not _completes_mill(occs, i, victim_occ):
            return True
        # tokens inside mills are protected unless every token is in a mill
        return all(
            _completes_mill(occs, k, victim_occ)
            for k, o in enumerate(occs)
            if o is victim_occ
        )
    if s.tray_count(mover) > 0:
        return (
            i == _tray_index(mover)
            and j < BOARD_FIELD_COUNT
            and occs[j] is _EMPTY
        )
    if i >= BOARD_FIELD_COUNT or j >= BOARD_FIELD_COUNT:
        return False
    mine_occ = occupation_of(mover)
    if occs[i] is not mine_occ or occs[j] is not _EMPTY:
        return False
    if sum(1 for o in occs if o is mine_occ) == 3:  # flying
        return True
    return j in ADJACENT_INDEXES[i]


def validate(s: SessionInfo, m: GameMove, caller: PlayerRole) -> StatusCode:
    """GOOD iff it is the caller's turn and the move is legal right now.

    Never mutates; turn and liveness problems rank as BAD_INVALID_STATE,
    a malformed or illegal move as BAD_INVALID_ARGUMENT.
    """
    if s.outcome is not None:
        return StatusCode.BAD_INVALID_STATE
    if caller is not s.state.next_player:
        return StatusCode.BAD_INVALID_STATE
    if _is_legal(s, m):
        return StatusCode.GOOD
    return StatusCode.BAD_INVALID_ARGUMENT


def apply_move(s: SessionInfo, m: GameMove) -> SessionInfo:
    """Successor session after the mover performs ``m``.

    Raises IllegalMoveError (leaving ``s`` untouched) unless
    ``validate(s, m, s.state.next_player)`` is GOOD.
    """
    if s.outcome is not None:
        raise IllegalMoveError(StatusCode.BAD_INVALID_STATE, f"cannot apply {m}: game over")
    if not _is_legal(s, m):
        raise IllegalMoveError(StatusCode.BAD_INVALID_ARGUMENT, f"cannot apply {m}")
    mover = s.state.next_player
    opp = opponent(mover)
    occs = list(s.state.board.occupations)
    tray = list(s.tray_unplaced)
    captured = list(s.captured)
    quiet = s.quiet_moves
    pending: PlayerRole | None = None

    if s.pending_capture is not None:
        victim = s.pending_capture
        occs[m.from_index] = _EMPTY
        captured[_player_index(victim)] += 1
        quiet = 0
        next_player = opp
    else:
        placement = m.from_index >= BOARD_FIELD_COUNT
        mover_occ = occupation_of(mover)
        if placement:
            tray[_player_index(mover)] -= 1
        else:
            occs[m.from_index] = _EMPTY
        to_index = m.to_index
        occs[to_index] = mover_occ
        if _completes_mill(occs, to_index, mover_occ):
            quiet = 0
            opp_occ = occupation_of(opp)
            if any(o is opp_occ for o in occs):
                pending = opp  # capture owed before the turn passes
                next_player = mover
            else:
                next_player = opp
        else:
            if not placement:
                quiet += 1
            next_player = opp

    board = GameBoard(tuple(occs))
    outcome: Outcome | None = None
    for role in _PLAYERS:
        i = _player_index(role)
        if tray[i] == 0 and occs.count(occupation_of(role)) < 3:
            outcome = win_for(opponent(role))
            break
    if outcome is None and quiet >= s.draw_threshold:
        outcome = Outcome.DRAW

    successor = SessionInfo(
        state=GameState(board, next_player),
        tray_unplaced=(tray[0], tray[1]),
        captured=(captured[0], captured[1]),
        pending_capture=pending,
        move_number=s.move_number + 1,
        quiet_moves=quiet,
        outcome=outcome,
        draw_threshold=s.draw_threshold,
    )
    if successor.outcome is None and pending is None and not _has_any_move(successor):
        successor = replace(successor, outcome=win_for(opponent(next_player)))
    return successor


def winner(s: SessionInfo) -> Outcome | None:
    """The recorded outcome, if the session has ended."""
    return s.outcome
