"""The game server: validates production orders, publishes state, and
orchestrates registered production units.

The server is the single authority over the session.  Accepted moves are
applied and published immediately (GameMove, then GameState, then
SessionInfo); physical execution runs asynchronously behind an order queue,
so players never wait on robots.  Units that fail beyond the retry budget
are marked Faulted and excluded until they reconnect; the game continues on
the twin alone.

Topic conventions: every topic retains its last value for late joiners.
After resetGame the retained value of the three game topics becomes ``null``
("no session"); initGame repopulates GameState/SessionInfo with the fresh
empty board.
"""

from __future__ import annotations

import asyncio
import itertools
import logging
from dataclasses import dataclass, field as dataclass_field
from enum import Enum
from pathlib import Path
from typing import Any

from websockets.asyncio.server import serve as ws_serve

from . import rules
from .model import (
    DecodeError,
    GameBoard,
    GameFieldOccupationState,
    GameMove,
    PlayerRole,
    StatusCode,
    tray_of,
)
from .protocol import (
    MAX_BODY_BYTES,
    PROTOCOL_VERSION,
    PeerIdentity,
    PeerRole,
    publish as publish_message,
)
from .transport import Connection, HeartbeatConfig, TcpTransport, WebSocketTransport
from .vita import SubPhase, VitaLog, VitaRecord, parse_timestamp, utc_now_ms

log = logging.getLogger(__name__)

TOPIC_GAME_STATE = "GameState"
TOPIC_GAME_MOVE = "GameMove"
TOPIC_SESSION_INFO = "SessionInfo"
TOPIC_UNIT_HEALTH = "UnitHealth"
TOPICS = (TOPIC_GAME_STATE, TOPIC_GAME_MOVE, TOPIC_SESSION_INFO, TOPIC_UNIT_HEALTH)

RPC_METHODS = ("initGame", "startGame", "resetGame", "nextMove")


class UnitHealth(Enum):
    READY = "Ready"
    BUSY = "Busy"
    FAULTED = "Faulted"
    DISCONNECTED = "Disconnected"


class GamePhase(Enum):
    IDLE = "idle"  # no session
    READY = "ready"  # initGame done, waiting for startGame
    RUNNING = "running"
    FINISHED = "finished"  # outcome reached


@dataclass
class ServerConfig:
    tcp_host: str = "127.0.0.1"
    tcp_port: int = 0  # 0 = ephemeral
    ws_host: str = "127.0.0.1"
    ws_port: int = 0
    vita_log_path: str | Path | None = None
    vita_fsync: bool = False
    draw_threshold: int = rules.DEFAULT_DRAW_THRESHOLD
    unit_deadline: float = 30.0  # per executeMove attempt, seconds
    unit_retries: int = 2  # extra attempts on BAD_TIMEOUT / BAD_DEVICE_FAILURE
    heartbeat: HeartbeatConfig = dataclass_field(default_factory=HeartbeatConfig)


@dataclass
class ProductionUnitHandle:
    """Server-side view of one registered cell."""

    name: str
    connection: Connection
    health: UnitHealth = UnitHealth.BUSY  # Busy until the first resync lands
    last_reported_board: GameBoard | None = None


@dataclass
class OrderResult:
    """Orchestration outcome of one accepted move."""

    order_id: int
    move: GameMove
    per_unit: dict[str, StatusCode]
    aggregate: StatusCode


class _Topic:
    __slots__ = ("name", "seq", "retained", "subscribers")

    def __init__(self, name: str):
        self.name = name
        self.seq = 0
        self.retained = None  # last publish WireMessage, if any
        self.subscribers: set[Connection] = set()


# order-queue job kinds
@dataclass
class _ExecuteJob:
    generation: int
    order_id: int
    move: GameMove


@dataclass
class _ResetAllJob:
    done: asyncio.Future


@dataclass
class _ResyncJob:
    unit_name: str
    board: GameBoard | None  # server board at registration time, None = no game


class GameServer:
    """One server instance hosts one game session at a time."""

    def __init__(self, config: ServerConfig | None = None):
        self.config = config or ServerConfig()
        self.phase = GamePhase.IDLE
        self.session: rules.SessionInfo | None = None
        self.players: dict[PlayerRole, Connection] = {}
        self.units: dict[str, ProductionUnitHandle] = {}
        self.order_results: dict[int, OrderResult] = {}
        self._order_ids = itertools.count(1)
        self._generation = 0
        self._topics = {name: _Topic(name) for name in TOPICS}
        self._peers: set[Connection] = set()
        self._jobs: asyncio.Queue = asyncio.Queue()
        self._worker: asyncio.Task | None = None
        self._tcp_server: asyncio.AbstractServer | None = None
        self._ws_server = None
        self._vita: VitaLog | None = None
        self.vita_write_failures = 0

    # -- lifecycle -------------------------------------------------------------

    async def start(self) -> None:
        if self.config.vita_log_path is not None:
            self._vita = VitaLog(self.config.vita_log_path, fsync=self.config.vita_fsync)
        self._worker = asyncio.ensure_future(self._order_worker())
        self._tcp_server = await asyncio.start_server(
            self._accept_tcp, self.config.tcp_host, self.config.tcp_port
        )
        self._ws_server = await ws_serve(
            self._accept_ws,
            self.config.ws_host,
            self.config.ws_port,
            max_size=MAX_BODY_BYTES,
            ping_interval=None,
        )
        log.info(
            "serving tcp on %s:%s, ws on %s:%s",
            *self.tcp_address,
            *self.ws_address,
        )

    @property
    def tcp_address(self) -> tuple[str, int]:
        assert self._tcp_server is not None and self._tcp_server.sockets
        host, port = self._tcp_server.sockets[0].getsockname()[:2]
        return host, port

    @property
    def ws_address(self) -> tuple[str, int]:
        assert self._ws_server is not None
        sock = next(iter(self._ws_server.sockets))
        host, port = sock.getsockname()[:2]
        return host, port

    @property
    def ws_url(self) -> str:
        host, port = self.ws_address
        return f"ws://{host}:{port}"

    async def stop(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        if self._worker is not None:
            self._worker.cancel()
        for conn in list(self._peers):
            await conn.close()  # resolves their in-flight calls as session-closed
        if self._vita is not None:
            self._vita.close()

    async def drain_orders(self) -> None:
        """Wait until every queued orchestration job has settled."""
        await self._jobs.join()

    # -- connection plumbing ----------------------------------------------------

    def _make_connection(self, transport) -> Connection:
        conn = Connection(
            transport,
            heartbeat=self.config.heartbeat,
            on_request=self._on_request,
            on_hello=self._on_hello,
            on_subscribe=self._on_subscribe,
            on_close=self._on_peer_close,
        )
        self._peers.add(conn)
        conn.start()
        return conn

    async def _accept_tcp(self, reader, writer) -> None:
        conn = self._make_connection(TcpTransport(reader, writer))
        await conn.wait_closed()

    async def _accept_ws(self, ws) -> None:
        conn = self._make_connection(WebSocketTransport(ws))
        await conn.wait_closed()

    async def _on_peer_close(self, conn: Connection) -> None:
        self._peers.discard(conn)
        for topic in self._topics.values():
            topic.subscribers.discard(conn)
        identity = conn.identity
        if identity is None:
            return
        if identity.role.is_player:
            role = identity.role.as_player_role()
            if self.players.get(role) is conn:
                del self.players[role]
                log.info("%s unbound (%s disconnected)", role.value, identity.name)
        elif identity.role is PeerRole.PRODUCTION_UNIT:
            handle = self.units.get(identity.name)
            if handle is not None and handle.connection is conn:
                handle.health = UnitHealth.DISCONNECTED
                self._publish_unit_health()

    # -- hello / subscribe -------------------------------------------------------

    async def _on_hello(self, conn: Connection, identity: PeerIdentity) -> StatusCode:
        if conn.identity is not None:
            return StatusCode.BAD_INVALID_STATE  # identity is immutable
        if identity.protocol_version != PROTOCOL_VERSION:
            log.warning(
                "rejecting %s: protocol %s, want %s",
                identity.name,
                identity.protocol_version,
                PROTOCOL_VERSION,
            )
            return StatusCode.BAD_INVALID_ARGUMENT
        if identity.role.is_player:
            role = identity.role.as_player_role()
            bound = self.players.get(role)
            if bound is not None and not bound.is_closed:
                return StatusCode.BAD_INVALID_STATE  # role already taken
            self.players[role] = conn
            log.info("%s bound to %s", role.value, identity.name)
            return StatusCode.GOOD
        if identity.role is PeerRole.PRODUCTION_UNIT:
            existing = self.units.get(identity.name)
            if existing is not None and not existing.connection.is_closed:
                return StatusCode.BAD_INVALID_STATE  # unit name already live
            handle = ProductionUnitHandle(name=identity.name, connection=conn)
            self.units[identity.name] = handle
            self._publish_unit_health()
            board = self.session.state.board if self.session is not None else None
            self._jobs.put_nowait(_ResyncJob(identity.name, board))
            log.info("unit %s registered", identity.name)
            return StatusCode.GOOD
        return StatusCode.GOOD  # observers just watch

    async def _on_subscribe(self, conn: Connection, topic_name: str) -> None:
        topic = self._topics.get(topic_name)
        if topic is None:
            # rpc-style error publish on the unknown topic
            conn.post(
                publish_message(topic_name, 0, {"status": StatusCode.BAD_NOT_FOUND.value})
            )
            return
        topic.subscribers.add(conn)
        if topic.retained is not None:
            conn.post(topic.retained)

    # -- publishing ---------------------------------------------------------------

    def _publish(self, topic_name: str, payload: Any) -> None:
        topic = self._topics[topic_name]
        topic.seq += 1
        msg = publish_message(topic_name, topic.seq, payload)
        topic.retained = msg
        for conn in topic.subscribers:
            conn.post(msg)

    def _clear_retained(self, topic_name: str) -> None:
        self._topics[topic_name].retained = None

    def _publish_unit_health(self) -> None:
        self._publish(
            TOPIC_UNIT_HEALTH,
            {"units": {name: h.health.value for name, h in sorted(self.units.items())}},
        )

    def _publish_session(self) -> None:
        assert self.session is not None
        self._publish(TOPIC_GAME_STATE, self.session.state.to_wire())
        self._publish(TOPIC_SESSION_INFO, self.session.to_wire())

    # -- RPC dispatch ---------------------------------------------------------------

    async def _on_request(
        self, conn: Connection, method: str, payload: Any
    ) -> tuple[StatusCode, Any]:
        if conn.identity is None:
            return (StatusCode.BAD_INVALID_STATE, None)  # hello comes first
        if method == "initGame":
            return await self._rpc_init_game(payload)
        if method == "startGame":
            return await self._rpc_start_game()
        if method == "resetGame":
            return await self._rpc_reset_game()
        if method == "nextMove":
            return self._rpc_next_move(conn, payload)
        return (StatusCode.BAD_NOT_FOUND, None)

    async def _rpc_init_game(self, payload: Any) -> tuple[StatusCode, Any]:
        if self.phase is GamePhase.RUNNING:
            return (StatusCode.BAD_INVALID_STATE, None)
        threshold = self.config.draw_threshold
        if payload is not None:
            if not isinstance(payload, dict) or set(payload) - {"draw_threshold"}:
                return (StatusCode.BAD_INVALID_ARGUMENT, None)
            if "draw_threshold" in payload:
                threshold = payload["draw_threshold"]
                if not isinstance(threshold, int) or isinstance(threshold, bool) or threshold < 1:
                    return (StatusCode.BAD_INVALID_ARGUMENT, None)
        self._generation += 1  # queued orders of the previous game are void
        reset_results = await self._request_reset_all()
        if any(not status.is_good for status in reset_results.values()):
            return (StatusCode.BAD_DEVICE_FAILURE, None)
        self.session = rules.new_session(threshold)
        self.phase = GamePhase.READY
        self._clear_retained(TOPIC_GAME_MOVE)
        self._publish_session()
        log.info("game initialized (draw threshold %d)", threshold)
        return (StatusCode.GOOD, None)

    async def _rpc_start_game(self) -> tuple[StatusCode, Any]:
        if self.phase is not GamePhase.READY or self.session is None:
            return (StatusCode.BAD_INVALID_STATE, None)
        for role in (PlayerRole.PLAYER_ONE, PlayerRole.PLAYER_TWO):
            conn = self.players.get(role)
            if conn is None or conn.is_closed:
                return (StatusCode.BAD_INVALID_STATE, None)
        self.phase = GamePhase.RUNNING
        self._publish_session()
        log.info("game running")
        return (StatusCode.GOOD, None)

    async def _rpc_reset_game(self) -> tuple[StatusCode, Any]:
        self._generation += 1
        self.session = None
        self.phase = GamePhase.IDLE
        reset_results = await self._request_reset_all()
        # "no session" marker for live subscribers and late joiners
        for topic in (TOPIC_GAME_STATE, TOPIC_GAME_MOVE, TOPIC_SESSION_INFO):
            self._publish(topic, None)
        log.info("game reset")
        if any(not status.is_good for status in reset_results.values()):
            return (StatusCode.BAD_DEVICE_FAILURE, None)
        return (StatusCode.GOOD, None)

    def _rpc_next_move(self, conn: Connection, payload: Any) -> tuple[StatusCode, Any]:
        identity = conn.identity
        assert identity is not None
        if not identity.role.is_player:
            return (StatusCode.BAD_INVALID_STATE, None)
        if self.phase is not GamePhase.RUNNING or self.session is None:
            return (StatusCode.BAD_INVALID_STATE, None)
        try:
            move = GameMove.from_wire(payload)
        except DecodeError as exc:
            log.info("nextMove rejected: %s", exc)
            return (StatusCode.BAD_INVALID_ARGUMENT, None)
        caller = identity.role.as_player_role()
        status = rules.validate(self.session, move, caller)
        if not status.is_good:
            return (status, None)
        # single writer: everything from validate to publish runs without awaits
        self.session = rules.apply_move(self.session, move)
        order_id = next(self._order_ids)
        self._publish(TOPIC_GAME_MOVE, move.to_wire())
        self._publish_session()
        if self.session.outcome is not None:
            self.phase = GamePhase.FINISHED
            log.info("game over: %s", self.session.outcome.value)
        self._jobs.put_nowait(_ExecuteJob(self._generation, order_id, move))
        return (StatusCode.GOOD, {"order_id": order_id})

    # -- orchestration ----------------------------------------------------------------

    async def _request_reset_all(self) -> dict[str, StatusCode]:
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._jobs.put_nowait(_ResetAllJob(future))
        return await future

    async def _order_worker(self) -> None:
        while True:
            job = await self._jobs.get()
            try:
                if isinstance(job, _ExecuteJob):
                    await self._run_execute(job)
                elif isinstance(job, _ResetAllJob):
                    await self._run_reset_all(job)
                elif isinstance(job, _ResyncJob):
                    await self._run_resync(job)
            except asyncio.CancelledError:
                raise
            except Exception:
                log.exception("order worker job failed: %r", job)
            finally:
                self._jobs.task_done()

    async def _run_execute(self, job: _ExecuteJob) -> None:
        if job.generation != self._generation:
            log.info("order %d dropped (stale generation)", job.order_id)
            return
        ready = [h for h in self.units.values() if h.health is UnitHealth.READY]
        statuses = await asyncio.gather(
            *(self._execute_on_unit(h, job.order_id, job.move) for h in ready)
        )
        per_unit = {h.name: status for h, status in zip(ready, statuses)}
        aggregate = (
            StatusCode.GOOD
            if all(status.is_good for status in per_unit.values())
            else StatusCode.BAD_DEVICE_FAILURE
        )
        self.order_results[job.order_id] = OrderResult(
            job.order_id, job.move, per_unit, aggregate
        )
        if not aggregate.is_good:
            log.warning("order %d degraded: %s", job.order_id, per_unit)

    async def _execute_on_unit(
        self, handle: ProductionUnitHandle, order_id: int, move: GameMove
    ) -> StatusCode:
        attempts_allowed = 1 + self.config.unit_retries
        handle.health = UnitHealth.BUSY
        self._publish_unit_health()
        try:
            for attempt in range(1, attempts_allowed + 1):
                started = utc_now_ms()
                status, payload = await handle.connection.call(
                    "executeMove", move.to_wire(), timeout=self.config.unit_deadline
                )
                if status.is_good:
                    ok = self._record_unit_success(handle, order_id, move, payload)
                    if ok:
                        handle.health = UnitHealth.READY
                        self._publish_unit_health()
                        return StatusCode.GOOD
                    status = StatusCode.BAD_INTERNAL  # unusable success payload
                self._append_vita(
                    VitaRecord(
                        order_id=order_id,
                        unit=handle.name,
                        move=move,
                        sub_phase=SubPhase.PICK_UP,
                        started_at=started,
                        ended_at=utc_now_ms(),
                        status=status,
                    )
                )
                retryable = status in (StatusCode.BAD_TIMEOUT, StatusCode.BAD_DEVICE_FAILURE)
                log.warning(
                    "unit %s attempt %d/%d for order %d: %s",
                    handle.name,
                    attempt,
                    attempts_allowed,
                    order_id,
                    status.value,
                )
                if status is StatusCode.BAD_SESSION_CLOSED:
                    handle.health = UnitHealth.DISCONNECTED
                    self._publish_unit_health()
                    return status
                if not retryable or attempt == attempts_allowed:
                    handle.health = UnitHealth.FAULTED
                    self._publish_unit_health()
                    return status
            raise AssertionError("unreachable")
        finally:
            if handle.health is UnitHealth.BUSY:
                handle.health = UnitHealth.READY
                self._publish_unit_health()

    def _record_unit_success(
        self, handle: ProductionUnitHandle, order_id: int, move: GameMove, payload: Any
    ) -> bool:
        try:
            board = GameBoard.from_wire(payload["board"])
            telemetry = payload["telemetry"]
            records = []
            for entry in telemetry:
                deviation = entry.get("deviation_mm")
                records.append(
                    VitaRecord(
                        order_id=order_id,
                        unit=handle.name,
                        move=move,
                        sub_phase=SubPhase(entry["sub_phase"]),
                        started_at=parse_timestamp(entry["started_at"], "telemetry"),
                        ended_at=parse_timestamp(entry["ended_at"], "telemetry"),
                        status=StatusCode.GOOD,
                        deviation_mm=deviation,
                    )
                )
            if len(records) != 3:
                raise ValueError(f"expected 3 sub-phases, got {len(records)}")
        except Exception as exc:
            log.warning("unit %s returned unusable payload: %s", handle.name, exc)
            return False
        handle.last_reported_board = board
        for record in records:
            self._append_vita(record)
        return True

    async def _run_reset_all(self, job: _ResetAllJob) -> None:
        async def reset_one(handle: ProductionUnitHandle) -> tuple[str, StatusCode]:
            status, payload = await handle.connection.call(
                "reset", timeout=self.config.unit_deadline
            )
            if status.is_good:
                handle.health = UnitHealth.READY
                try:
                    handle.last_reported_board = GameBoard.from_wire(payload["board"])
                except Exception:
                    handle.last_reported_board = GameBoard.empty()
            elif status is StatusCode.BAD_SESSION_CLOSED:
                handle.health = UnitHealth.DISCONNECTED
            else:
                handle.health = UnitHealth.FAULTED
            return handle.name, status

        live = [h for h in self.units.values() if not h.connection.is_closed]
        results = dict(await asyncio.gather(*(reset_one(h) for h in live)))
        if live:
            self._publish_unit_health()
        job.done.set_result(results)

    async def _run_resync(self, job: _ResyncJob) -> None:
        handle = self.units.get(job.unit_name)
        if handle is None or handle.connection.is_closed:
            return
        status, payload = await handle.connection.call(
            "reset", timeout=self.config.unit_deadline
        )
        if not status.is_good:
            handle.health = UnitHealth.FAULTED
            self._publish_unit_health()
            log.warning("unit %s failed resync reset: %s", job.unit_name, status.value)
            return
        board = GameBoard.empty()
        if job.board is not None:
            # rebuild the board: one placement per occupied field
            for entry in job.board.entries():
                if entry.occupation is GameFieldOccupationState.EMPTY:
                    continue
                owner = (
                    PlayerRole.PLAYER_ONE
                    if entry.occupation is GameFieldOccupationState.PLAYER_ONE
                    else PlayerRole.PLAYER_TWO
                )
                move = GameMove(tray_of(owner), entry.field)
                status, _ = await handle.connection.call(
                    "executeMove", move.to_wire(), timeout=self.config.unit_deadline
                )
                if not status.is_good:
                    handle.health = UnitHealth.FAULTED
                    self._publish_unit_health()
                    log.warning(
                        "unit %s failed resync placement %s: %s",
                        job.unit_name,
                        move,
                        status.value,
                    )
                    return
            board = job.board
        handle.last_reported_board = board
        handle.health = UnitHealth.READY
        self._publish_unit_health()
        log.info("unit %s in sync", job.unit_name)

    def _append_vita(self, record: VitaRecord) -> None:
        if self._vita is None:
            return
        if not self._vita.append(record):
            self.vita_write_failures += 1
