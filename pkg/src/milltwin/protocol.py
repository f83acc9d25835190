"""Wire protocol: framed JSON messages for correlated RPC and Pub/Sub.

One ``WireMessage`` is one JSON object.  Over TCP, messages travel behind a
4-byte big-endian length prefix; over WebSocket, one text frame carries one
message with the identical JSON body.  Every RPC answer carries a norm-style
StatusCode; topic publishes carry a per-topic sequence number that increases
by exactly one per publish.
"""

from __future__ import annotations

import asyncio
import json
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any

from .model import DecodeError, PlayerRole, StatusCode, _expect_object

PROTOCOL_VERSION = "ibpt/1"

HEADER_SIZE = 4
MAX_BODY_BYTES = 1 << 20  # frames larger than 1 MiB are a protocol violation

KINDS = frozenset(
    {"hello", "rpc_request", "rpc_response", "subscribe", "publish", "ping", "pong"}
)

# correlation id of the hello/acknowledgement exchange; client-chosen request
# ids start at 1
HELLO_ID = 0
MAX_U64 = (1 << 64) - 1


class FrameError(ValueError):
    """Framing-level protocol violation (size, JSON, or message schema)."""


class PeerRole(Enum):
    """Who a connection claims to be.  Extends the player roles with the
    production units that register to receive move executions."""

    PLAYER_ONE = "PlayerOne"
    PLAYER_TWO = "PlayerTwo"
    OBSERVER = "Observer"
    PRODUCTION_UNIT = "ProductionUnit"

    @property
    def is_player(self) -> bool:
        return self in (PeerRole.PLAYER_ONE, PeerRole.PLAYER_TWO)

    def as_player_role(self) -> PlayerRole:
        if self is PeerRole.PRODUCTION_UNIT:
            raise ValueError("production units hold no player role")
        return PlayerRole(self.value)


@dataclass(frozen=True)
class PeerIdentity:
    """Declared once in the hello message, immutable per connection."""

    role: PeerRole
    name: str
    protocol_version: str = PROTOCOL_VERSION

    def __post_init__(self):
        if not self.name:
            raise ValueError("peer name must be non-empty")

    def to_wire(self) -> dict:
        return {
            "role": self.role.value,
            "name": self.name,
            "protocol_version": self.protocol_version,
        }

    @classmethod
    def from_wire(cls, obj: Any, path: str = "PeerIdentity") -> "PeerIdentity":
        data = _expect_object(obj, path, {"role", "name", "protocol_version"})
        try:
            role = PeerRole(data["role"])
        except (ValueError, TypeError):
            raise DecodeError(f"{path}.role", f"unknown role {data['role']!r}") from None
        name = data["name"]
        if not isinstance(name, str) or not name:
            raise DecodeError(f"{path}.name", "expected non-empty string")
        version = data["protocol_version"]
        if not isinstance(version, str):
            raise DecodeError(f"{path}.protocol_version", "expected string")
        return cls(role, name, version)


_REQUIRED_BY_KIND = {
    "hello": frozenset({"id", "payload"}),
    "rpc_request": frozenset({"id", "method"}),
    "rpc_response": frozenset({"id", "status"}),
    "subscribe": frozenset({"topic"}),
    "publish": frozenset({"topic", "seq"}),
    "ping": frozenset(),
    "pong": frozenset(),
}
_OPTIONAL_BY_KIND = {
    "hello": frozenset(),
    "rpc_request": frozenset({"payload"}),
    "rpc_response": frozenset({"payload"}),
    "subscribe": frozenset(),
    "publish": frozenset({"payload"}),
    "ping": frozenset(),
    "pong": frozenset(),
}


@dataclass(frozen=True)
class WireMessage:
    """Envelope for everything that crosses a connection."""

    kind: str
    id: int | None = None
    topic: str | None = None
    seq: int | None = None
    method: str | None = None
    status: StatusCode | None = None
    payload: Any = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        present = {
            name
            for name in ("id", "topic", "seq", "method", "status", "payload")
            if getattr(self, name) is not None
        }
        required = _REQUIRED_BY_KIND[self.kind]
        allowed = required | _OPTIONAL_BY_KIND[self.kind]
        missing = required - present
        if missing:
            raise ValueError(f"{self.kind} requires {sorted(missing)}")
        extra = present - allowed
        if extra:
            raise ValueError(f"{self.kind} does not carry {sorted(extra)}")
        for name in ("id", "seq"):
            value = getattr(self, name)
            if value is not None and not (0 <= value <= MAX_U64):
                raise ValueError(f"{name} out of unsigned 64-bit range")

    def to_wire(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        for name in ("id", "topic", "seq", "method"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        if self.status is not None:
            out["status"] = self.status.value
        if self.payload is not None:
            out["payload"] = self.payload
        return out

    @classmethod
    def from_wire(cls, obj: Any, path: str = "WireMessage") -> "WireMessage":
        if not isinstance(obj, dict):
            raise DecodeError(path, "expected object")
        kind = obj.get("kind")
        if kind not in KINDS:
            raise DecodeError(f"{path}.kind", f"unknown kind {kind!r}")
        data = _expect_object(
            obj,
            path,
            {"kind"} | set(_REQUIRED_BY_KIND[kind]),
            _OPTIONAL_BY_KIND[kind],
        )
        fields: dict[str, Any] = {"kind": kind}
        for name in ("id", "seq"):
            if name in data:
                value = data[name]
                if not isinstance(value, int) or isinstance(value, bool) or not (
                    0 <= value <= MAX_U64
                ):
                    raise DecodeError(f"{path}.{name}", "expected unsigned 64-bit integer")
                fields[name] = value
        for name in ("topic", "method"):
            if name in data:
                value = data[name]
                if not isinstance(value, str) or not value:
                    raise DecodeError(f"{path}.{name}", "expected non-empty string")
                fields[name] = value
        if "status" in data:
            value = data["status"]
            try:
                fields["status"] = StatusCode(value)
            except (ValueError, TypeError):
                raise DecodeError(f"{path}.status", f"unknown status {value!r}") from None
        if "payload" in data:
            fields["payload"] = data["payload"]
        try:
            return cls(**fields)
        except ValueError as exc:
            raise DecodeError(path, str(exc)) from None


def hello(identity: PeerIdentity) -> WireMessage:
    return WireMessage(kind="hello", id=HELLO_ID, payload=identity.to_wire())


def rpc_request(request_id: int, method: str, payload: Any = None) -> WireMessage:
    return WireMessage(kind="rpc_request", id=request_id, method=method, payload=payload)


def rpc_response(request_id: int, status: StatusCode, payload: Any = None) -> WireMessage:
    return WireMessage(kind="rpc_response", id=request_id, status=status, payload=payload)


def subscribe(topic: str) -> WireMessage:
    return WireMessage(kind="subscribe", topic=topic)


def publish(topic: str, seq: int, payload: Any = None) -> WireMessage:
    return WireMessage(kind="publish", topic=topic, seq=seq, payload=payload)


def ping() -> WireMessage:
    return WireMessage(kind="ping")


def pong() -> WireMessage:
    return WireMessage(kind="pong")


def encode_message(msg: WireMessage) -> str:
    """The JSON text body, identical across transports."""
    return json.dumps(msg.to_wire(), separators=(",", ":"), ensure_ascii=False)


def decode_message(text: str | bytes) -> WireMessage:
    """Parse one JSON body; raises FrameError on violations."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FrameError(f"body is not UTF-8: {exc}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FrameError(f"malformed JSON: {exc}") from None
    try:
        return WireMessage.from_wire(obj)
    except DecodeError as exc:
        raise FrameError(str(exc)) from None


def frame(msg: WireMessage) -> bytes:
    """Length-prefixed byte form for stream transports."""
    body = encode_message(msg).encode("utf-8")
    if len(body) > MAX_BODY_BYTES:
        raise FrameError(f"frame too large: {len(body)} bytes")
    return struct.pack(">I", len(body)) + body


async def read_frame(reader: asyncio.StreamReader) -> WireMessage:
    """Read one length-prefixed message from a stream.

    Raises ``asyncio.IncompleteReadError`` at clean EOF and ``FrameError``
    on oversized frames or malformed bodies.
    """
    header = await reader.readexactly(HEADER_SIZE)
    (length,) = struct.unpack(">I", header)
    if length > MAX_BODY_BYTES:
        raise FrameError(f"frame too large: {length} bytes")
    body = await reader.readexactly(length)
    return decode_message(body)
