/** Wire protocol types and board constants, mirroring the server's JSON schema. */

export const PROTOCOL_VERSION = "ibpt/1";

export type StatusCode =
  | "GOOD"
  | "BAD_INVALID_ARGUMENT"
  | "BAD_INVALID_STATE"
  | "BAD_NOT_FOUND"
  | "BAD_TIMEOUT"
  | "BAD_SESSION_CLOSED"
  | "BAD_DEVICE_FAILURE"
  | "BAD_INTERNAL";

export type PeerRole = "PlayerOne" | "PlayerTwo" | "Observer" | "ProductionUnit";
export type PlayerRole = "PlayerOne" | "PlayerTwo";
export type Occupation = "Empty" | "PlayerOne" | "PlayerTwo";

export interface WireMessage {
  kind: "hello" | "rpc_request" | "rpc_response" | "subscribe" | "publish" | "ping" | "pong";
  id?: number;
  topic?: string;
  seq?: number;
  method?: string;
  status?: StatusCode;
  payload?: unknown;
}

export interface GameFieldStateWire {
  field: string;
  occupation: Occupation;
}

export interface GameStateWire {
  board: GameFieldStateWire[];
  next: PlayerRole;
}

export interface SessionInfoWire {
  state: GameStateWire;
  phase: Record<PlayerRole, "Placement" | "Movement" | "Flying">;
  pending_capture: PlayerRole | null;
  tray_unplaced: Record<PlayerRole, number>;
  captured: Record<PlayerRole, number>;
  move_number: number;
  quiet_moves: number;
  outcome: "WinPlayerOne" | "WinPlayerTwo" | "Draw" | null;
  draw_threshold: number;
}

export interface UnitHealthWire {
  units: Record<string, "Ready" | "Busy" | "Faulted" | "Disconnected">;
}

export interface GameMoveWire {
  from: string;
  to: string;
}

/** The 24 board fields in canonical array order (file, then rank). */
export const BOARD_FIELDS = [
  "a1", "a4", "a7", "b2", "b4", "b6", "c3", "c4", "c5",
  "d1", "d2", "d3", "d5", "d6", "d7",
  "e3", "e4", "e5", "f2", "f4", "f6", "g1", "g4", "g7",
] as const;

export type FieldName = (typeof BOARD_FIELDS)[number];
export type TrayName = "tray1" | "tray2";

/** (column 0..6, row 0..6) of a field on the 7x7 grid; row 0 is rank 1. */
export function gridPosition(field: string): [number, number] {
  return [field.charCodeAt(0) - 97, Number(field[1]) - 1];
}

/** The 16 drawn line segments (exactly the mill lines: 8 rows, 8 columns). */
export const LINES: ReadonlyArray<readonly [FieldName, FieldName, FieldName]> = [
  ["a1", "d1", "g1"],
  ["b2", "d2", "f2"],
  ["c3", "d3", "e3"],
  ["a4", "b4", "c4"],
  ["e4", "f4", "g4"],
  ["c5", "d5", "e5"],
  ["b6", "d6", "f6"],
  ["a7", "d7", "g7"],
  ["a1", "a4", "a7"],
  ["b2", "b4", "b6"],
  ["c3", "c4", "c5"],
  ["d1", "d2", "d3"],
  ["d5", "d6", "d7"],
  ["e3", "e4", "e5"],
  ["f2", "f4", "f6"],
  ["g1", "g4", "g7"],
];

export function trayOf(role: PlayerRole): TrayName {
  return role === "PlayerOne" ? "tray1" : "tray2";
}

export function opponentOf(role: PlayerRole): PlayerRole {
  return role === "PlayerOne" ? "PlayerTwo" : "PlayerOne";
}
