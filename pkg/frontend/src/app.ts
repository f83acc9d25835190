/** The client application: server-authoritative board, click-to-move.
 *
 * All board mutations come from GameState publications; a submitted move
 * only highlights optimistically and reconciles with the next publication.
 * Status codes from rejected moves surface verbatim as toasts.
 */

import { createBoard, type BoardView } from "./board.js";
import { Connection } from "./connection.js";
import {
  trayOf,
  type GameStateWire,
  type PeerRole,
  type PlayerRole,
  type SessionInfoWire,
  type UnitHealthWire,
} from "./protocol.js";
import { buildUi, type Ui } from "./ui.js";

export interface AppOptions {
  server: string;
  role: PeerRole;
  name: string;
}

export interface App {
  connection: Connection;
  board: BoardView;
  ui: Ui;
  readonly session: SessionInfoWire | null;
  readonly gameState: GameStateWire | null;
  /** Same entry point the SVG click handlers use; tests drive it directly. */
  clickTarget(target: string): Promise<void>;
  moveInFlight(): boolean;
}

export async function initApp(root: HTMLElement, options: AppOptions): Promise<App> {
  const ui = buildUi(root, `milltwin - ${options.role}`);
  ui.showBanner(`connecting to ${options.server} ...`);

  let opened;
  try {
    opened = await Connection.open(options.server, options.role, options.name);
  } catch (err) {
    ui.showBanner(`server unreachable: ${String(err)} - reload to retry`, "warn");
    throw err;
  }
  let connection = opened.connection;
  let playingAs: PlayerRole | null =
    options.role === "PlayerOne" || options.role === "PlayerTwo" ? options.role : null;

  if (opened.status !== "GOOD") {
    // most likely a taken player role; offer to watch instead
    ui.showBanner(`role rejected: ${opened.status}`, "conflict");
    const watch = document.createElement("button");
    watch.textContent = "watch as observer";
    watch.className = "observer-retry";
    ui.banner.appendChild(watch);
    connection.close();
    await new Promise<void>((resolve) => {
      watch.addEventListener("click", () => resolve(), { once: true });
    });
    const retry = await Connection.open(options.server, "Observer", `${options.name}-observer`);
    if (retry.status !== "GOOD") {
      ui.showBanner(`observer rejected too: ${retry.status}`, "warn");
      throw new Error(retry.status);
    }
    connection = retry.connection;
    playingAs = null;
  }
  ui.clearBanner();

  let session: SessionInfoWire | null = null;
  let gameState: GameStateWire | null = null;
  let selection: string | null = null;
  let inFlight = false;

  const board = createBoard((target) => {
    void handleClick(target);
  });
  ui.boardSlot.appendChild(board.root);

  for (const [label, method] of [
    ["new game", "initGame"],
    ["start", "startGame"],
    ["reset", "resetGame"],
  ] as const) {
    const button = document.createElement("button");
    button.textContent = label;
    button.dataset.method = method;
    button.addEventListener("click", () => {
      void connection.call(method).then(({ status }) => {
        if (status !== "GOOD") ui.toast(`${method}: ${status}`);
      });
    });
    ui.adminBar.appendChild(button);
  }

  function describeTurn(): string {
    if (!session) return "no game in progress";
    if (session.outcome) return `game over: ${session.outcome}`;
    const mover = session.state.next;
    const who = mover === playingAs ? "your move" : `${mover} to move`;
    if (session.pending_capture) return `${who}: capture required`;
    return `${who} (${session.phase[mover]})`;
  }

  function refreshPanel(): void {
    ui.turnLine.textContent = describeTurn();
    if (!session) return;
    board.setTrayCounts(
      session.tray_unplaced.PlayerOne + session.captured.PlayerOne,
      session.tray_unplaced.PlayerTwo + session.captured.PlayerTwo,
    );
    if (session.outcome) {
      ui.showBanner(`game over: ${session.outcome}`, "info");
    } else if (session.pending_capture && session.state.next === playingAs) {
      ui.showBanner(
        "capture required: click an opponent token, then their tray",
        "warn",
      );
    } else {
      ui.clearBanner();
    }
  }

  connection.subscribe("GameState", (_seq, payload) => {
    gameState = payload as GameStateWire | null;
    board.update(gameState);
    selection = null;
    board.setSelected(null);
  });
  connection.subscribe("SessionInfo", (_seq, payload) => {
    session = payload as SessionInfoWire | null;
    refreshPanel();
  });
  connection.subscribe("UnitHealth", (_seq, payload) => {
    const health = payload as UnitHealthWire;
    ui.healthList.innerHTML = "";
    for (const [unit, state] of Object.entries(health.units)) {
      const item = document.createElement("li");
      item.textContent = `${unit}: ${state}`;
      item.className = `unit unit-${state.toLowerCase()}`;
      ui.healthList.appendChild(item);
    }
  });
  connection.onClose(() => {
    ui.showBanner("connection lost - reload to reconnect", "warn");
  });

  function isValidSource(target: string): boolean {
    if (!session || session.outcome || !playingAs) return false;
    if (session.state.next !== playingAs) return false;
    if (session.pending_capture) {
      // capture mode: pick up an opponent token
      return (
        !target.startsWith("tray") &&
        board.occupationOf(target) === session.pending_capture
      );
    }
    if (target === trayOf(playingAs)) {
      return session.tray_unplaced[playingAs] > 0;
    }
    if (target.startsWith("tray")) return false;
    // never a blind pick: empty sources are blocked locally
    return board.occupationOf(target) === playingAs;
  }

  async function submit(from: string, to: string): Promise<void> {
    if (inFlight) return;
    inFlight = true;
    board.setSelected(to); // optimistic highlight until the next publication
    const { status } = await connection.call("nextMove", { from, to });
    inFlight = false;
    if (status !== "GOOD") {
      ui.toast(status);
      board.setSelected(null);
    }
  }

  async function handleClick(target: string): Promise<void> {
    if (!playingAs) return; // observers only watch
    if (selection === null) {
      if (isValidSource(target)) {
        selection = target;
        board.setSelected(target);
      }
      return;
    }
    if (selection === target) {
      selection = null; // second click on the same field clears the pick
      board.setSelected(null);
      return;
    }
    const from = selection;
    selection = null;
    await submit(from, target);
  }

  refreshPanel();

  return {
    connection,
    board,
    ui,
    get session() {
      return session;
    },
    get gameState() {
      return gameState;
    },
    clickTarget: handleClick,
    moveInFlight: () => inFlight,
  };
}
