"""Single entry point: one subcommand per actor, plus log inspection.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.  The
server address for client subcommands falls back to the IBPT_SERVER
environment variable.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
from pathlib import Path

from .agent import AgentConfig, run_agent
from .cell import load_cell_config, run_cell
from .model import DecodeError, GameField, GameMove, PlayerRole, opponent, tray_of
from .protocol import PeerIdentity, PeerRole
from .render import render_session
from .rules import SessionInfo
from .server import GameServer, ServerConfig
from .transport import connect_any
from .vita import VitaLogError, VitaStats, read_vita_log, SUB_PHASES

log = logging.getLogger(__name__)

DEFAULT_TCP = "127.0.0.1:9300"
DEFAULT_WS = "127.0.0.1:9301"
EX_OK, EX_RUNTIME, EX_USAGE = 0, 1, 2

ROLES = {"p1": PlayerRole.PLAYER_ONE, "p2": PlayerRole.PLAYER_TWO}


def _split_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def _server_address(value: str | None) -> str:
    address = value or os.environ.get("IBPT_SERVER") or f"tcp://{DEFAULT_TCP}"
    return address


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="milltwin",
        description="Game-move production twin: server, cells, players, telemetry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the game server")
    serve.add_argument("--listen-tcp", default=DEFAULT_TCP, metavar="HOST:PORT")
    serve.add_argument("--listen-ws", default=DEFAULT_WS, metavar="HOST:PORT")
    serve.add_argument("--vita-log", metavar="PATH", default=None)
    serve.add_argument("--draw-threshold", type=int, default=50, metavar="N")
    serve.add_argument("--unit-deadline", type=float, default=30.0, metavar="SECONDS")
    serve.add_argument("--unit-retries", type=int, default=2, metavar="N")
    serve.add_argument("--fsync", action="store_true", help="fsync the vita log per record")
    serve.add_argument("--config", metavar="PATH", help="JSON config; flags override it")

    cell = sub.add_parser("cell", help="run one simulated robot cell")
    cell.add_argument("--config", required=True, metavar="PATH")
    cell.add_argument("--server", metavar="ADDR")
    cell.add_argument("--seed", type=int, default=None, metavar="N")

    agent = sub.add_parser("agent", help="run a search-driven player")
    agent.add_argument("--role", required=True, choices=sorted(ROLES))
    agent.add_argument("--depth", type=int, default=4, metavar="N")
    agent.add_argument("--server", metavar="ADDR")
    agent.add_argument("--seed", type=int, default=0, metavar="N")
    agent.add_argument("--think-delay-ms", type=int, default=0, metavar="MS")
    agent.add_argument("--name", metavar="NAME")

    play = sub.add_parser("play", help="play interactively in the terminal")
    play.add_argument("--role", required=True, choices=sorted(ROLES))
    play.add_argument("--server", metavar="ADDR")
    play.add_argument("--name", default=None, metavar="NAME")

    stats = sub.add_parser("vita-stats", help="summarize a telemetry log")
    stats.add_argument("--log", required=True, metavar="PATH")
    stats.add_argument(
        "--report-dir",
        metavar="DIR",
        help="also write vita_stats.csv and figures into DIR",
    )
    return parser


# -- serve ---------------------------------------------------------------------


def _load_serve_config(args) -> ServerConfig:
    values = {
        "listen_tcp": args.listen_tcp,
        "listen_ws": args.listen_ws,
        "vita_log": args.vita_log,
        "draw_threshold": args.draw_threshold,
        "unit_deadline": args.unit_deadline,
        "unit_retries": args.unit_retries,
        "fsync": args.fsync,
    }
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            file_values = json.load(f)
        unknown = set(file_values) - set(values)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        defaults = build_parser().parse_args(["serve"])
        for key, file_value in file_values.items():
            arg_name = key
            if getattr(args, arg_name) == getattr(defaults, arg_name):
                values[key] = file_value  # flags beat the file
    tcp_host, tcp_port = _split_address(values["listen_tcp"])
    ws_host, ws_port = _split_address(values["listen_ws"])
    return ServerConfig(
        tcp_host=tcp_host,
        tcp_port=tcp_port,
        ws_host=ws_host,
        ws_port=ws_port,
        vita_log_path=values["vita_log"],
        vita_fsync=bool(values["fsync"]),
        draw_threshold=int(values["draw_threshold"]),
        unit_deadline=float(values["unit_deadline"]),
        unit_retries=int(values["unit_retries"]),
    )


async def _serve(config: ServerConfig) -> int:
    server = GameServer(config)
    try:
        await server.start()
    except OSError as exc:
        print(f"cannot listen: {exc}", file=sys.stderr)
        return EX_RUNTIME
    host, port = server.tcp_address
    print(f"tcp://{host}:{port}")
    print(server.ws_url)
    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        loop.add_signal_handler(sig, stop.set)
    await stop.wait()
    print("shutting down", file=sys.stderr)
    await server.stop()
    return EX_OK


# -- play ----------------------------------------------------------------------


def parse_move_input(text: str, role: PlayerRole) -> GameMove | str:
    """Turn prompt input into a move, or explain why not.

    Accepted: ``tray a1`` (place), ``a1 a4`` (slide/fly), ``g7 tray``
    (capture to the opponent's tray).
    """
    parts = text.strip().lower().split()
    if len(parts) != 2:
        return "enter two endpoints, e.g. 'tray a1', 'a1 a4' or 'g7 tray'"
    names = []
    for i, part in enumerate(parts):
        if part == "tray":
            names.append(tray_of(role) if i == 0 else tray_of(opponent(role)))
            continue
        try:
            field = GameField(part)
        except ValueError:
            return f"unknown field {part!r}"
        if field.is_tray:
            return "name trays as just 'tray'"
        names.append(field)
    if names[0] is names[1]:
        return "endpoints must differ"
    if names[0].is_tray and names[1].is_tray:
        return "one endpoint must be a board field"
    try:
        return GameMove(names[0], names[1])
    except ValueError as exc:
        return str(exc)


async def _play(role: PlayerRole, address: str, name: str | None) -> int:
    try:
        conn = await connect_any(address)
    except OSError as exc:
        print(f"cannot reach {address}: {exc}", file=sys.stderr)
        return EX_RUNTIME
    status = await conn.send_hello(
        PeerIdentity(PeerRole(role.value), name or f"human-{role.value.lower()}")
    )
    if not status.is_good:
        print(f"hello rejected: {status.value}", file=sys.stderr)
        await conn.close()
        return EX_RUNTIME
    session_sub = conn.subscribe("SessionInfo")
    conn.subscribe("GameState")

    async def watch():
        async for _seq, payload in session_sub:
            if payload is None:
                print("\n(no game in progress)")
                continue
            try:
                session = SessionInfo.from_wire(payload)
            except DecodeError as exc:
                log.warning("bad session payload: %s", exc)
                continue
            print("\n" + render_session(session))
            if session.outcome is None and session.state.next_player is role:
                print("your move> ", end="", flush=True)

    watcher = asyncio.ensure_future(watch())
    loop = asyncio.get_running_loop()
    print(f"connected as {role.value}; moves like 'tray a1', 'a1 a4', 'g7 tray'.")
    print("commands: help, quit")
    try:
        while not conn.is_closed:
            line = await loop.run_in_executor(None, sys.stdin.readline)
            if not line:
                break
            line = line.strip()
            if not line:
                continue
            if line in ("quit", "exit"):
                break
            if line == "help":
                print("moves: 'tray a1' place, 'a1 a4' slide, 'g7 tray' capture")
                continue
            parsed = parse_move_input(line, role)
            if isinstance(parsed, str):
                print(parsed)
                continue
            status, _ = await conn.call("nextMove", parsed.to_wire())
            print(status.value)
    finally:
        watcher.cancel()
        await conn.close()
    return EX_OK


# -- vita-stats ------------------------------------------------------------------


def _print_stats(stats: VitaStats) -> None:
    print(f"records: {stats.total_records}   orders: {stats.orders}")
    print(f"{'sub_phase':<12} {'count':>6} {'mean_ms':>10} {'max_ms':>10} {'mean_dev_mm':>12}")
    for phase in SUB_PHASES:
        s = stats.per_phase[phase]
        dev = "-" if s.mean_deviation_mm is None else f"{s.mean_deviation_mm:.4f}"
        print(
            f"{phase.value:<12} {s.count:>6} {s.mean_duration_ms:>10.3f} "
            f"{s.max_duration_ms:>10.3f} {dev:>12}"
        )
    if stats.records_by_unit:
        print(f"{'unit':<12} {'records':>8} {'failures':>9}")
        for unit in sorted(stats.records_by_unit):
            print(
                f"{unit:<12} {stats.records_by_unit[unit]:>8} "
                f"{stats.failures_by_unit.get(unit, 0):>9}"
            )


def _vita_stats(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"no such log: {path}", file=sys.stderr)
        return EX_USAGE
    try:
        records = list(read_vita_log(path))
    except VitaLogError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return EX_RUNTIME
    stats = VitaStats.from_records(records)
    _print_stats(stats)
    if args.report_dir:
        from .report import write_report

        for written in write_report(records, stats, args.report_dir):
            print(f"wrote {written}")
    return EX_OK


# -- main -------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("MILLTWIN_LOG", "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            try:
                config = _load_serve_config(args)
            except (OSError, ValueError, json.JSONDecodeError) as exc:
                print(f"bad server config: {exc}", file=sys.stderr)
                return EX_USAGE
            return asyncio.run(_serve(config))
        if args.command == "cell":
            try:
                config = load_cell_config(args.config)
            except FileNotFoundError:
                print(f"no such config: {args.config}", file=sys.stderr)
                return EX_USAGE
            except (ValueError, json.JSONDecodeError) as exc:
                print(f"bad cell config: {exc}", file=sys.stderr)
                return EX_USAGE
            try:
                asyncio.run(run_cell(config, _server_address(args.server), seed=args.seed))
            except (OSError, RuntimeError) as exc:
                print(f"cell failed: {exc}", file=sys.stderr)
                return EX_RUNTIME
            return EX_OK
        if args.command == "agent":
            config = AgentConfig(
                role=ROLES[args.role],
                search_depth=args.depth,
                rng_seed=args.seed,
                think_delay_ms=args.think_delay_ms,
            )
            try:
                outcome = asyncio.run(
                    run_agent(config, _server_address(args.server), name=args.name)
                )
            except (OSError, RuntimeError, ConnectionError) as exc:
                print(f"agent failed: {exc}", file=sys.stderr)
                return EX_RUNTIME
            print("game over" if outcome is None else f"outcome: {outcome.value}")
            return EX_OK if outcome is not None else EX_RUNTIME
        if args.command == "play":
            return asyncio.run(
                _play(ROLES[args.role], _server_address(args.server), args.name)
            )
        if args.command == "vita-stats":
            return _vita_stats(args)
    except KeyboardInterrupt:
        return EX_RUNTIME
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
