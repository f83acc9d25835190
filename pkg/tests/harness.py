"""Shared integration-test plumbing: in-process server plus protocol clients.

Heartbeats are disabled and unit deadlines shortened so failure paths run in
test time.  Everything binds to ephemeral localhost ports.
"""

from __future__ import annotations

import asyncio
import contextlib
from pathlib import Path

from milltwin.cell import CellClient, RobotCell, default_cell_config
from milltwin.model import StatusCode
from milltwin.protocol import PeerIdentity, PeerRole
from milltwin.server import GameServer, ServerConfig
from milltwin.transport import Connection, HeartbeatConfig, connect_tcp, connect_ws

NO_HEARTBEAT = HeartbeatConfig(interval=None)


class Harness:
    """One server and its clients, torn down as a unit."""

    def __init__(self, server: GameServer):
        self.server = server
        self.connections: list[Connection] = []
        self.cell_clients: list[CellClient] = []

    @property
    def tcp_address(self) -> tuple[str, int]:
        return self.server.tcp_address

    @property
    def ws_url(self) -> str:
        return self.server.ws_url

    async def connect(self, role: PeerRole, name: str, via: str = "tcp") -> Connection:
        """Open a connection, send hello, and require it to be accepted."""
        conn = await self.raw_connect(via)
        status = await conn.send_hello(PeerIdentity(role, name))
        assert status is StatusCode.GOOD, f"hello {name} as {role.value}: {status.value}"
        return conn

    async def raw_connect(self, via: str = "tcp") -> Connection:
        if via == "tcp":
            host, port = self.server.tcp_address
            conn = await connect_tcp(host, port, heartbeat=NO_HEARTBEAT)
        else:
            conn = await connect_ws(self.server.ws_url, heartbeat=NO_HEARTBEAT)
        self.connections.append(conn)
        return conn

    async def add_cell(
        self, name: str, seed: int = 1, config=None, **config_kwargs
    ) -> CellClient:
        host, port = self.server.tcp_address
        cell = RobotCell(
            config or default_cell_config(name, **config_kwargs), seed=seed
        )
        client = CellClient(cell, f"tcp://{host}:{port}", heartbeat=NO_HEARTBEAT)
        status = await client.start()
        assert status is StatusCode.GOOD, f"cell {name} rejected: {status.value}"
        self.cell_clients.append(client)
        await self.server.drain_orders()  # resync settles before the test goes on
        return client

    async def start_two_player_game(self, threshold: int | None = None):
        p1 = await self.connect(PeerRole.PLAYER_ONE, "p1")
        p2 = await self.connect(PeerRole.PLAYER_TWO, "p2")
        payload = None if threshold is None else {"draw_threshold": threshold}
        status, _ = await p1.call("initGame", payload)
        assert status is StatusCode.GOOD, status
        status, _ = await p1.call("startGame")
        assert status is StatusCode.GOOD, status
        return p1, p2


@contextlib.asynccontextmanager
async def running_server(config: ServerConfig | None = None):
    config = config or ServerConfig(heartbeat=NO_HEARTBEAT)
    server = GameServer(config)
    await server.start()
    harness = Harness(server)
    try:
        yield harness
    finally:
        for client in harness.cell_clients:
            await client.close()
        for conn in harness.connections:
            await conn.close()
        await server.stop()
        await asyncio.sleep(0)  # let cancelled tasks unwind


def fast_config(tmp_path: Path | None = None, **overrides) -> ServerConfig:
    """Short unit deadlines; optional vita log under tmp_path."""
    kwargs = dict(
        heartbeat=NO_HEARTBEAT,
        unit_deadline=overrides.pop("unit_deadline", 0.5),
    )
    if tmp_path is not None:
        kwargs["vita_log_path"] = tmp_path / "vita.ndjson"
    kwargs.update(overrides)
    return ServerConfig(**kwargs)


async def subscribe_and_wait(server: GameServer, conn: Connection, topic: str):
    """Subscribe and block until the server has registered the subscriber."""
    before = len(server._topics[topic].subscribers)
    sub = conn.subscribe(topic)
    for _ in range(500):
        if len(server._topics[topic].subscribers) > before or conn in server._topics[
            topic
        ].subscribers:
            return sub
        await asyncio.sleep(0.005)
    raise TimeoutError(f"subscription to {topic} never registered")

