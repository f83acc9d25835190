"""Autonomous player: depth-limited minimax with alpha-beta pruning.

The evaluation is deliberately simple and fully deterministic so searches
are reproducible and comparable against an unpruned reference:

    score = 10 * (own tokens - opponent tokens)  [alive = on board + unplaced]
          + (own mobility - opponent mobility)

Mobility counts a player's placement/sliding/flying options regardless of
whose turn it is.  Root moves are searched with a full window each, so
equal-valued moves keep their exact values and ties break by a seeded
uniform choice; pruning still applies inside the subtrees.
"""

from __future__ import annotations

import asyncio
import logging
import random
from dataclasses import dataclass

from .model import (
    GameFieldOccupationState,
    GameMove,
    PlayerRole,
    StatusCode,
    occupation_of,
    opponent,
)
from .protocol import PeerIdentity, PeerRole
from .rules import Outcome, SessionInfo, apply_move, legal_moves, win_for
from .topology import ADJACENT_INDEXES
from .transport import connect_any

log = logging.getLogger(__name__)

WIN_SCORE = 10_000.0
TOKEN_WEIGHT = 10.0

_EMPTY = GameFieldOccupationState.EMPTY


@dataclass(frozen=True)
class AgentConfig:
    role: PlayerRole
    search_depth: int = 4
    rng_seed: int = 0
    think_delay_ms: int = 0

    def __post_init__(self):
        if not self.role.is_player:
            raise ValueError("an agent must play a player role, not observe")
        if self.search_depth < 1:
            raise ValueError("search depth must be >= 1")
        if self.think_delay_ms < 0:
            raise ValueError("think delay must be >= 0")


def _alive_tokens(s: SessionInfo, role: PlayerRole) -> int:
    return s.on_board(role) + s.tray_count(role)


def _mobility(s: SessionInfo, role: PlayerRole) -> int:
    """Open placement squares while tray tokens remain, plus open sliding
    destinations of on-board tokens.  Flying tokens are counted by their
    sliding freedom too: it understates them, but keeps both players on one
    scale so the token term stays decisive."""
    occs = s.state.board.occupations
    mine_occ = occupation_of(role)
    mine = [i for i, o in enumerate(occs) if o is mine_occ]
    score = sum(
        1 for i in mine for j in ADJACENT_INDEXES[i] if occs[j] is _EMPTY
    )
    if s.tray_count(role) > 0:
        score += sum(1 for o in occs if o is _EMPTY)
    return score


def evaluate(s: SessionInfo, agent: PlayerRole) -> float:
    """Static score of a position from the agent's point of view."""
    other = opponent(agent)
    return TOKEN_WEIGHT * (
        _alive_tokens(s, agent) - _alive_tokens(s, other)
    ) + (_mobility(s, agent) - _mobility(s, other))


def _move_key(m: GameMove) -> tuple[str, str]:
    return (m.from_field.value, m.to_field.value)


def search_value(
    s: SessionInfo,
    agent: PlayerRole,
    depth: int,
    alpha: float = -float("inf"),
    beta: float = float("inf"),
    prune: bool = True,
) -> float:
    """Minimax value of a position; ``prune=False`` gives the plain search.

    Who maximizes is decided by the side to move, not by ply parity: after
    a mill the same player moves again (the capture), and the search must
    follow that.
    """
    if s.outcome is not None:
        if s.outcome is Outcome.DRAW:
            return 0.0
        return WIN_SCORE if s.outcome is win_for(agent) else -WIN_SCORE
    if depth <= 0:
        return evaluate(s, agent)
    maximizing = s.state.next_player is agent
    best = -float("inf") if maximizing else float("inf")
    for m in sorted(legal_moves(s), key=_move_key):
        value = search_value(apply_move(s, m), agent, depth - 1, alpha, beta, prune)
        if maximizing:
            if value > best:
                best = value
            if prune:
                alpha = max(alpha, value)
                if beta <= alpha:
                    break
        else:
            if value < best:
                best = value
            if prune:
                beta = min(beta, value)
                if beta <= alpha:
                    break
    return best


def move_values(
    s: SessionInfo, depth: int, prune: bool = True
) -> dict[GameMove, float]:
    """Exact value per legal root move (each searched with a full window)."""
    if s.outcome is not None:
        raise ValueError("game is over, nothing to search")
    agent = s.state.next_player
    return {
        m: search_value(apply_move(s, m), agent, depth - 1, prune=prune)
        for m in legal_moves(s)
    }


def choose_move(s: SessionInfo, depth: int, rng: random.Random) -> GameMove:
    """Best move for the side to move; seeded uniform choice among ties."""
    values = move_values(s, depth)
    if not values:
        raise ValueError("no legal moves (outcome should have been observed)")
    best = max(values.values())
    ties = sorted((m for m, v in values.items() if v == best), key=_move_key)
    if len(ties) == 1:
        return ties[0]
    return ties[rng.randrange(len(ties))]


async def run_agent(
    config: AgentConfig,
    server_address: str,
    *,
    name: str | None = None,
    max_reconnects: int = 5,
    backoff_base: float = 0.5,
    **connection_kwargs,
) -> Outcome | None:
    """Play one game to its outcome; returns None on resignation.

    Subscribes to GameState and SessionInfo, answers every own turn with a
    searched move, treats BAD_INVALID_STATE answers as turn races (another
    state publication will follow), resigns on other failures, and
    reconnects with bounded backoff if the server connection drops.
    """
    rng = random.Random(config.rng_seed)
    peer_role = PeerRole(config.role.value)
    agent_name = name or f"agent-{config.role.value.lower()}"
    reconnects = 0
    while True:
        try:
            conn = await connect_any(server_address, **connection_kwargs)
        except OSError as exc:
            reconnects += 1
            if reconnects > max_reconnects:
                raise
            delay = min(backoff_base * (2 ** reconnects), 10.0)
            log.warning("%s: connect failed (%s), retry in %.1fs", agent_name, exc, delay)
            await asyncio.sleep(delay)
            continue
        status = await conn.send_hello(PeerIdentity(peer_role, agent_name))
        if not status.is_good:
            await conn.close()
            raise RuntimeError(f"{agent_name}: hello rejected: {status.value}")
        conn.subscribe("GameState")  # board stream, rendered by humans/UIs
        session_sub = conn.subscribe("SessionInfo")
        try:
            async for _seq, payload in session_sub:
                if payload is None:
                    continue  # game was reset; wait for the next one
                try:
                    session = SessionInfo.from_wire(payload)
                except Exception as exc:
                    log.warning("%s: bad SessionInfo payload: %s", agent_name, exc)
                    continue
                if session.outcome is not None:
                    log.info("%s: game over: %s", agent_name, session.outcome.value)
                    return session.outcome
                if session.state.next_player is not config.role:
                    continue
                if config.think_delay_ms:
                    await asyncio.sleep(config.think_delay_ms / 1000.0)
                move = choose_move(session, config.search_depth, rng)
                status, _ = await conn.call("nextMove", move.to_wire())
                if status.is_good or status is StatusCode.BAD_INVALID_STATE:
                    continue  # accepted, or a turn race: follow the next state
                log.error("%s: move rejected (%s), resigning", agent_name, status.value)
                return None
        finally:
            await conn.close()
        reconnects += 1
        if reconnects > max_reconnects:
            raise ConnectionError(f"{agent_name}: server connection kept dropping")
        delay = min(backoff_base * (2 ** reconnects), 10.0)
        log.warning("%s: disconnected, retry in %.1fs", agent_name, delay)
        await asyncio.sleep(delay)
