"""Board topology: neighbor relation and the 16 three-in-a-row lines.

The board is three concentric squares whose edge midpoints are joined by
four cross lines that stop at the center.  Adjacency and mill tables below
are written out explicitly; the test suite re-derives both from the grid
geometry and cross-checks every entry.
"""

from __future__ import annotations

from .model import BOARD_FIELDS, FIELD_INDEX, GameField

# (file 0..6, rank 0..6) of every board field on the 7x7 grid; used for
# rendering and for generating default cell coordinates.
GRID_POSITION: dict[GameField, tuple[int, int]] = {
    f: (ord(f.value[0]) - ord("a"), int(f.value[1]) - 1) for f in BOARD_FIELDS
}

_ADJACENT_NAMES: dict[str, tuple[str, ...]] = {
    "a1": ("a4", "d1"),
    "a4": ("a1", "a7", "b4"),
    "a7": ("a4", "d7"),
    "b2": ("b4", "d2"),
    "b4": ("a4", "b2", "b6", "c4"),
    "b6": ("b4", "d6"),
    "c3": ("c4", "d3"),
    "c4": ("b4", "c3", "c5"),
    "c5": ("c4", "d5"),
    "d1": ("a1", "d2", "g1"),
    "d2": ("b2", "d1", "d3", "f2"),
    "d3": ("c3", "d2", "e3"),
    "d5": ("c5", "d6", "e5"),
    "d6": ("b6", "d5", "d7", "f6"),
    "d7": ("a7", "d6", "g7"),
    "e3": ("d3", "e4"),
    "e4": ("e3", "e5", "f4"),
    "e5": ("d5", "e4"),
    "f2": ("d2", "f4"),
    "f4": ("e4", "f2", "f6", "g4"),
    "f6": ("d6", "f4"),
    "g1": ("d1", "g4"),
    "g4": ("f4", "g1", "g7"),
    "g7": ("d7", "g4"),
}

_MILL_NAMES: tuple[tuple[str, str, str], ...] = (
    # one line per drawn segment of three fields: 8 along rows, 8 along columns
    ("a1", "d1", "g1"),
    ("b2", "d2", "f2"),
    ("c3", "d3", "e3"),
    ("a4", "b4", "c4"),
    ("e4", "f4", "g4"),
    ("c5", "d5", "e5"),
    ("b6", "d6", "f6"),
    ("a7", "d7", "g7"),
    ("a1", "a4", "a7"),
    ("b2", "b4", "b6"),
    ("c3", "c4", "c5"),
    ("d1", "d2", "d3"),
    ("d5", "d6", "d7"),
    ("e3", "e4", "e5"),
    ("f2", "f4", "f6"),
    ("g1", "g4", "g7"),
)

ADJACENCY: dict[GameField, frozenset[GameField]] = {
    GameField(name): frozenset(GameField(n) for n in neighbors)
    for name, neighbors in _ADJACENT_NAMES.items()
}

MILLS: frozenset[frozenset[GameField]] = frozenset(
    frozenset(GameField(n) for n in triple) for triple in _MILL_NAMES
)

# Index-level views for the rules engine's inner loops: for each field index,
# its neighbor indexes, and the index pairs completing each line through it.
ADJACENT_INDEXES: tuple[tuple[int, ...], ...] = tuple(
    tuple(sorted(FIELD_INDEX[n] for n in ADJACENCY[f])) for f in BOARD_FIELDS
)
MILL_PARTNER_INDEXES: tuple[tuple[tuple[int, int], ...], ...] = tuple(
    tuple(
        tuple(sorted(FIELD_INDEX[g] for g in mill if g is not f))  # type: ignore[misc]
        for mill in MILLS
        if f in mill
    )
    for f in BOARD_FIELDS
)


def adjacent(field: GameField) -> frozenset[GameField]:
    """Neighbors of a board field along drawn lines."""
    if field.is_tray:
        raise ValueError("trays have no board neighbors")
    return ADJACENCY[field]


def mills_containing(field: GameField) -> frozenset[frozenset[GameField]]:
    """The mill lines through a board field."""
    if field.is_tray:
        raise ValueError("trays are not part of any mill")
    return frozenset(m for m in MILLS if field in m)
