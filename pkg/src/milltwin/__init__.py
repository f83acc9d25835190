"""Game-move production twin: server, simulated robot cells, clients, telemetry."""

__version__ = "0.1.0"

from .model import (
    GameBoard,
    GameField,
    GameFieldOccupationState,
    GameFieldState,
    GameMove,
    GameState,
    PlayerRole,
    StatusCode,
    decode,
    encode,
)
from .rules import Outcome, Phase, SessionInfo, new_session

__all__ = [
    "GameBoard",
    "GameField",
    "GameFieldOccupationState",
    "GameFieldState",
    "GameMove",
    "GameState",
    "PlayerRole",
    "StatusCode",
    "Outcome",
    "Phase",
    "SessionInfo",
    "new_session",
    "decode",
    "encode",
]
