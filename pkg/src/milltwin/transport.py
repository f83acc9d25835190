"""Connection machinery shared by server and clients.

A ``Connection`` multiplexes correlated RPC calls, topic subscriptions, and
heartbeats over one transport.  Exactly one reader task and one writer task
run per connection: outbound messages go through an ordered outbox queue, so
sends are atomic and preserve posting order; inbound requests are dispatched
to handler tasks so slow handlers never stall pings or responses.

Both transports carry the identical JSON message body: TCP behind a 4-byte
big-endian length prefix, WebSocket as one text frame per message.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass
from typing import Any, Awaitable, Callable
from urllib.parse import urlparse

from websockets.asyncio.client import connect as ws_connect
from websockets.exceptions import ConnectionClosed as WsConnectionClosed

from .model import StatusCode
from .protocol import (
    FrameError,
    HELLO_ID,
    MAX_BODY_BYTES,
    PeerIdentity,
    WireMessage,
    decode_message,
    encode_message,
    frame,
    hello as hello_message,
    ping as ping_message,
    pong as pong_message,
    read_frame,
    rpc_request,
    rpc_response,
    subscribe as subscribe_message,
)

log = logging.getLogger(__name__)

DEFAULT_CALL_TIMEOUT = 5.0


class ConnectionClosed(Exception):
    """The peer went away (clean close or transport failure)."""


@dataclass(frozen=True)
class HeartbeatConfig:
    """Protocol-level liveness: ping every ``interval`` seconds, declare the
    peer dead after ``max_missed`` unanswered pings.  ``interval=None``
    disables heartbeats (unit tests)."""

    interval: float | None = 10.0
    max_missed: int = 2


class TcpTransport:
    """Length-prefixed JSON messages over an asyncio stream pair."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    @property
    def description(self) -> str:
        peer = self._writer.get_extra_info("peername")
        return f"tcp:{peer[0]}:{peer[1]}" if peer else "tcp:?"

    async def send(self, msg: WireMessage) -> None:
        self._writer.write(frame(msg))
        await self._writer.drain()

    async def recv(self) -> WireMessage:
        try:
            return await read_frame(self._reader)
        except (
            asyncio.IncompleteReadError,
            ConnectionResetError,
            BrokenPipeError,
            OSError,
        ) as exc:
            raise ConnectionClosed(str(exc)) from None

    async def close(self) -> None:
        try:
            self._writer.close()
            await self._writer.wait_closed()
        except (ConnectionResetError, BrokenPipeError, OSError):
            pass


class WebSocketTransport:
    """One text frame per JSON message; binary frames are a violation."""

    def __init__(self, ws):
        self._ws = ws

    @property
    def description(self) -> str:
        addr = getattr(self._ws, "remote_address", None)
        return f"ws:{addr[0]}:{addr[1]}" if addr else "ws:?"

    async def send(self, msg: WireMessage) -> None:
        try:
            await self._ws.send(encode_message(msg))
        except WsConnectionClosed as exc:
            raise ConnectionClosed(str(exc)) from None

    async def recv(self) -> WireMessage:
        try:
            raw = await self._ws.recv()
        except WsConnectionClosed as exc:
            raise ConnectionClosed(str(exc)) from None
        if isinstance(raw, bytes):
            raise FrameError("binary WebSocket frames are not part of the protocol")
        return decode_message(raw)

    async def close(self) -> None:
        await self._ws.close()


_CLOSED = object()  # subscription queue sentinel

RequestHandler = Callable[["Connection", str, Any], Awaitable[tuple[StatusCode, Any]]]
HelloHandler = Callable[["Connection", PeerIdentity], Awaitable[StatusCode]]
SubscribeHandler = Callable[["Connection", str], Awaitable[None]]
CloseHandler = Callable[["Connection"], Awaitable[None]]


class Subscription:
    """Ordered stream of (seq, payload) deliveries for one topic."""

    def __init__(self, topic: str):
        self.topic = topic
        self._queue: asyncio.Queue = asyncio.Queue()

    def _deliver(self, item) -> None:
        self._queue.put_nowait(item)

    def __aiter__(self):
        return self

    async def __anext__(self) -> tuple[int, Any]:
        item = await self._queue.get()
        if item is _CLOSED:
            raise StopAsyncIteration
        return item

    async def next(self, timeout: float | None = None) -> tuple[int, Any]:
        """One delivery, or TimeoutError / ConnectionClosed."""
        if timeout is None:
            item = await self._queue.get()
        else:
            item = await asyncio.wait_for(self._queue.get(), timeout)
        if item is _CLOSED:
            raise ConnectionClosed(f"subscription to {self.topic} ended")
        return item

    def drain_nowait(self) -> list[tuple[int, Any]]:
        """Everything already delivered, without waiting."""
        out = []
        while not self._queue.empty():
            item = self._queue.get_nowait()
            if item is _CLOSED:
                break
            out.append(item)
        return out


class Connection:
    """One protocol session over a transport, usable from either side."""

    def __init__(
        self,
        transport,
        *,
        heartbeat: HeartbeatConfig = HeartbeatConfig(),
        call_timeout: float = DEFAULT_CALL_TIMEOUT,
        on_request: RequestHandler | None = None,
        on_hello: HelloHandler | None = None,
        on_subscribe: SubscribeHandler | None = None,
        on_close: CloseHandler | None = None,
    ):
        self._transport = transport
        self._heartbeat = heartbeat
        self._call_timeout = call_timeout
        self._on_request = on_request
        self._on_hello = on_hello
        self._on_subscribe = on_subscribe
        self._on_close = on_close

        self.identity: PeerIdentity | None = None  # set after successful hello

        self._next_id = 1
        self._pending: dict[int, asyncio.Future] = {}
        self._subscriptions: dict[str, list[Subscription]] = {}
        self._outbox: asyncio.Queue = asyncio.Queue()
        self._missed_pongs = 0
        self._closed = False
        self._closed_event = asyncio.Event()
        self._tasks: list[asyncio.Task] = []
        self._handler_tasks: set[asyncio.Task] = set()

    @property
    def description(self) -> str:
        who = self.identity.name if self.identity else "?"
        return f"{self._transport.description}({who})"

    @property
    def is_closed(self) -> bool:
        return self._closed

    def start(self) -> None:
        self._tasks.append(asyncio.ensure_future(self._read_loop()))
        self._tasks.append(asyncio.ensure_future(self._write_loop()))
        if self._heartbeat.interval:
            self._tasks.append(asyncio.ensure_future(self._heartbeat_loop()))

    # -- outbound -------------------------------------------------------------

    def post(self, msg: WireMessage) -> None:
        """Queue a message; delivery order equals posting order."""
        if not self._closed:
            self._outbox.put_nowait(msg)

    async def call(
        self, method: str, payload: Any = None, timeout: float | None = None
    ) -> tuple[StatusCode, Any]:
        """Correlated request/response; resolves out-of-order answers by id."""
        if self._closed:
            return (StatusCode.BAD_SESSION_CLOSED, None)
        request_id = self._next_id
        self._next_id += 1
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pending[request_id] = future
        self.post(rpc_request(request_id, method, payload))
        try:
            msg = await asyncio.wait_for(
                future, self._call_timeout if timeout is None else timeout
            )
        except asyncio.TimeoutError:
            self._pending.pop(request_id, None)
            return (StatusCode.BAD_TIMEOUT, None)
        if msg is None:
            return (StatusCode.BAD_SESSION_CLOSED, None)
        return (msg.status, msg.payload)

    async def send_hello(
        self, identity: PeerIdentity, timeout: float | None = None
    ) -> StatusCode:
        """Declare who we are; waits for the server's acknowledgement."""
        if self._closed:
            return StatusCode.BAD_SESSION_CLOSED
        future: asyncio.Future = asyncio.get_running_loop().create_future()
        self._pending[HELLO_ID] = future
        self.post(hello_message(identity))
        try:
            msg = await asyncio.wait_for(
                future, self._call_timeout if timeout is None else timeout
            )
        except asyncio.TimeoutError:
            self._pending.pop(HELLO_ID, None)
            return StatusCode.BAD_TIMEOUT
        if msg is None:
            return StatusCode.BAD_SESSION_CLOSED
        if msg.status is StatusCode.GOOD:
            self.identity = identity
        return msg.status

    def subscribe(self, topic: str) -> Subscription:
        """Ask for a topic stream; deliveries arrive on the returned object."""
        sub = Subscription(topic)
        self._subscriptions.setdefault(topic, []).append(sub)
        self.post(subscribe_message(topic))
        return sub

    def respond(self, request_id: int, status: StatusCode, payload: Any = None) -> None:
        self.post(rpc_response(request_id, status, payload))

    # -- inbound --------------------------------------------------------------

    async def _read_loop(self) -> None:
        reason = "peer closed"
        try:
            while True:
                msg = await self._transport.recv()
                self._dispatch(msg)
        except ConnectionClosed as exc:
            reason = str(exc) or reason
        except FrameError as exc:
            reason = f"protocol violation: {exc}"
            log.warning("%s: %s", self.description, reason)
        except asyncio.CancelledError:
            return
        finally:
            asyncio.ensure_future(self._shutdown())

    def _dispatch(self, msg: WireMessage) -> None:
        kind = msg.kind
        if kind == "publish":
            for sub in self._subscriptions.get(msg.topic, ()):  # type: ignore[arg-type]
                sub._deliver((msg.seq, msg.payload))
        elif kind == "rpc_response":
            future = self._pending.pop(msg.id, None)  # type: ignore[arg-type]
            if future is not None and not future.done():
                future.set_result(msg)
            # late replies (after timeout) are dropped by correlation
        elif kind == "rpc_request":
            self._spawn_handler(self._handle_request(msg))
        elif kind == "hello":
            self._spawn_handler(self._handle_hello(msg))
        elif kind == "subscribe":
            if self._on_subscribe is not None:
                self._spawn_handler(self._on_subscribe(self, msg.topic))
        elif kind == "ping":
            self.post(pong_message())
        elif kind == "pong":
            self._missed_pongs = 0

    def _spawn_handler(self, coro) -> None:
        task = asyncio.ensure_future(coro)
        self._handler_tasks.add(task)
        task.add_done_callback(self._handler_tasks.discard)

    async def _handle_request(self, msg: WireMessage) -> None:
        if self._on_request is None:
            self.respond(msg.id, StatusCode.BAD_NOT_FOUND)  # type: ignore[arg-type]
            return
        try:
            status, payload = await self._on_request(self, msg.method, msg.payload)
        except Exception:
            log.exception("%s: handler for %s failed", self.description, msg.method)
            status, payload = StatusCode.BAD_INTERNAL, None
        self.respond(msg.id, status, payload)  # type: ignore[arg-type]

    async def _handle_hello(self, msg: WireMessage) -> None:
        if self._on_hello is None:
            self.respond(msg.id, StatusCode.BAD_INVALID_STATE)  # type: ignore[arg-type]
            return
        try:
            identity = PeerIdentity.from_wire(msg.payload)
        except Exception as exc:
            log.warning("%s: bad hello: %s", self.description, exc)
            self.respond(msg.id, StatusCode.BAD_INVALID_ARGUMENT)  # type: ignore[arg-type]
            return
        try:
            status = await self._on_hello(self, identity)
        except Exception:
            log.exception("%s: hello handler failed", self.description)
            status = StatusCode.BAD_INTERNAL
        if status is StatusCode.GOOD:
            self.identity = identity
        self.respond(msg.id, status)  # type: ignore[arg-type]

    # -- outbound writer and liveness -----------------------------------------

    async def _write_loop(self) -> None:
        try:
            while True:
                msg = await self._outbox.get()
                if msg is _CLOSED:
                    break
                await self._transport.send(msg)
        except (ConnectionClosed, asyncio.CancelledError):
            pass
        except Exception as exc:
            log.warning("%s: send failed: %s", self.description, exc)
        finally:
            asyncio.ensure_future(self._shutdown())

    async def _heartbeat_loop(self) -> None:
        assert self._heartbeat.interval
        try:
            while True:
                await asyncio.sleep(self._heartbeat.interval)
                if self._missed_pongs >= self._heartbeat.max_missed:
                    log.warning("%s: heartbeat lost, closing", self.description)
                    break
                self._missed_pongs += 1
                self.post(ping_message())
        except asyncio.CancelledError:
            return
        asyncio.ensure_future(self._shutdown())

    # -- teardown --------------------------------------------------------------

    async def close(self) -> None:
        await self._shutdown()

    async def wait_closed(self) -> None:
        await self._closed_event.wait()

    async def _shutdown(self) -> None:
        if self._closed:
            return
        self._closed = True
        self._outbox.put_nowait(_CLOSED)
        for future in self._pending.values():
            if not future.done():
                future.set_result(None)  # surfaces as BAD_SESSION_CLOSED
        self._pending.clear()
        for subs in self._subscriptions.values():
            for sub in subs:
                sub._deliver(_CLOSED)
        for task in self._tasks:
            if task is not asyncio.current_task():
                task.cancel()
        await self._transport.close()
        if self._on_close is not None:
            try:
                await self._on_close(self)
            except Exception:
                log.exception("%s: close handler failed", self.description)
        self._closed_event.set()


async def connect_tcp(host: str, port: int, **kwargs) -> Connection:
    reader, writer = await asyncio.open_connection(host, port)
    conn = Connection(TcpTransport(reader, writer), **kwargs)
    conn.start()
    return conn


async def connect_ws(url: str, **kwargs) -> Connection:
    # library-level pings are off; liveness runs at the protocol level
    ws = await ws_connect(url, max_size=MAX_BODY_BYTES, ping_interval=None)
    conn = Connection(WebSocketTransport(ws), **kwargs)
    conn.start()
    return conn


async def connect_any(address: str, **kwargs) -> Connection:
    """Dial ``ws://host:port``, ``tcp://host:port``, or bare ``host:port``."""
    if address.startswith(("ws://", "wss://")):
        return await connect_ws(address, **kwargs)
    if address.startswith("tcp://"):
        parsed = urlparse(address)
        if not parsed.hostname or not parsed.port:
            raise ValueError(f"bad tcp address {address!r}")
        return await connect_tcp(parsed.hostname, parsed.port, **kwargs)
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {address!r}")
    return await connect_tcp(host, int(port), **kwargs)
