"""Board topology cross-checked against the geometry-derived oracle."""

from collections import Counter

import pytest

import oracle
from milltwin.model import BOARD_FIELDS, GameField
from milltwin.topology import (
    ADJACENCY,
    GRID_POSITION,
    MILLS,
    adjacent,
    mills_containing,
)


def test_oracle_field_set_matches_canonical_order():
    # the oracle's sorted names must be exactly the canonical array order
    assert [f.value for f in BOARD_FIELDS] == oracle.FIELD_NAMES


def test_adjacency_matches_oracle_everywhere():
    for f in BOARD_FIELDS:
        assert {n.value for n in adjacent(f)} == oracle.ADJACENCY[f.value], f


def test_a1_neighbors():
    assert adjacent(GameField.A1) == {GameField.A4, GameField.D1}


def test_d2_is_a_degree_four_cross_point():
    assert adjacent(GameField.D2) == {
        GameField.B2,
        GameField.D1,
        GameField.D3,
        GameField.F2,
    }


def test_adjacency_symmetric_and_irreflexive():
    for f in BOARD_FIELDS:
        assert f not in ADJACENCY[f]
        for n in ADJACENCY[f]:
            assert f in ADJACENCY[n]


def test_degree_histogram():
    hist = Counter(len(ADJACENCY[f]) for f in BOARD_FIELDS)
    assert dict(hist) == {2: 12, 3: 8, 4: 4}


def test_sixteen_mills_matching_oracle():
    assert len(MILLS) == 16
    oracle_mills = {frozenset(m) for m in oracle.MILLS}
    assert {frozenset(f.value for f in m) for m in MILLS} == oracle_mills


def test_eight_row_and_eight_column_mills():
    rows = [m for m in MILLS if len({f.value[1] for f in m}) == 1]
    cols = [m for m in MILLS if len({f.value[0] for f in m}) == 1]
    assert len(rows) == 8
    assert len(cols) == 8


def test_mills_containing_a1():
    expected = {
        frozenset({GameField.A1, GameField.D1, GameField.G1}),
        frozenset({GameField.A1, GameField.A4, GameField.A7}),
    }
    assert mills_containing(GameField.A1) == expected


def test_mills_containing_d2():
    expected = {
        frozenset({GameField.B2, GameField.D2, GameField.F2}),
        frozenset({GameField.D1, GameField.D2, GameField.D3}),
    }
    assert mills_containing(GameField.D2) == expected


def test_every_field_in_exactly_two_mills():
    for f in BOARD_FIELDS:
        assert len(mills_containing(f)) == 2


def test_mill_fields_form_a_line_of_adjacent_fields():
    for mill in MILLS:
        # exactly two adjacent pairs: ends connect through the middle
        pairs = [
            (a, b)
            for a in mill
            for b in mill
            if a.value < b.value and b in ADJACENCY[a]
        ]
        assert len(pairs) == 2, sorted(f.value for f in mill)


def test_tray_inputs_rejected():
    with pytest.raises(ValueError):
        adjacent(GameField.TRAY1)
    with pytest.raises(ValueError):
        mills_containing(GameField.TRAY2)


def test_grid_positions_cover_board():
    assert len(GRID_POSITION) == 24
    assert GRID_POSITION[GameField.A1] == (0, 0)
    assert GRID_POSITION[GameField.G7] == (6, 6)
    assert GRID_POSITION[GameField.D5] == (3, 4)
