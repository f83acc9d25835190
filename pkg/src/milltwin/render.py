"""Text rendering of the board for the terminal client.

Fields are drawn at their grid positions with connection lines taken from
the topology, so the picture stays honest if the tables ever change:
``.`` empty, ``X`` PlayerOne, ``O`` PlayerTwo.
"""

from __future__ import annotations

from .model import (
    GameBoard,
    GameFieldOccupationState,
    PlayerRole,
)
from .rules import SessionInfo
from .topology import ADJACENCY, GRID_POSITION

_MARKERS = {
    GameFieldOccupationState.EMPTY: ".",
    GameFieldOccupationState.PLAYER_ONE: "X",
    GameFieldOccupationState.PLAYER_TWO: "O",
}

_CELL_W = 4  # columns per file
_CELL_H = 2  # rows per rank


def render_board(board: GameBoard) -> str:
    """Multi-line picture with 24 field markers and rank/file labels."""
    width = 6 * _CELL_W + 1
    height = 6 * _CELL_H + 1
    canvas = [[" "] * width for _ in range(height)]

    def pos(field) -> tuple[int, int]:
        col, row = GRID_POSITION[field]
        return (col * _CELL_W, (6 - row) * _CELL_H)

    for field, neighbors in ADJACENCY.items():
        x0, y0 = pos(field)
        for other in neighbors:
            x1, y1 = pos(other)
            if y0 == y1:
                for x in range(min(x0, x1) + 1, max(x0, x1)):
                    canvas[y0][x] = "-"
            else:
                for y in range(min(y0, y1) + 1, max(y0, y1)):
                    canvas[y][x0] = "|"
    for field in GRID_POSITION:
        x, y = pos(field)
        canvas[y][x] = _MARKERS[board.occupation(field)]

    lines = []
    for y, row in enumerate(canvas):
        rank = 7 - y // _CELL_H if y % _CELL_H == 0 else None
        label = f"{rank} " if rank is not None else "  "
        lines.append(label + "".join(row).rstrip())
    files = "  " + "".join(c.ljust(_CELL_W) for c in "abcdefg").rstrip()
    lines.append(files)
    return "\n".join(lines)


def render_session(session: SessionInfo) -> str:
    """Board plus the bookkeeping a player needs at the prompt."""
    lines = [render_board(session.state.board), ""]
    if session.outcome is not None:
        lines.append(f"game over: {session.outcome.value}")
    else:
        mover = session.state.next_player
        what = (
            f"must capture (move an opponent token to their tray)"
            if session.pending_capture is not None
            else f"to move ({session.phase(mover).value})"
        )
        lines.append(f"move {session.move_number}: {mover.value} {what}")
    for role in (PlayerRole.PLAYER_ONE, PlayerRole.PLAYER_TWO):
        marker = _MARKERS[
            GameFieldOccupationState.PLAYER_ONE
            if role is PlayerRole.PLAYER_ONE
            else GameFieldOccupationState.PLAYER_TWO
        ]
        lines.append(
            f"  {marker} {role.value}: {session.on_board(role)} on board, "
            f"{session.tray_count(role)} in tray, {session.captured_count(role)} captured"
        )
    return "\n".join(lines)
