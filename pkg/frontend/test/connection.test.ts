import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { Connection } from "../src/connection.js";
import { RawClient, startServer, until, type LiveServer } from "./server.js";

let server: LiveServer;

beforeAll(async () => {
  server = await startServer();
});

afterAll(async () => {
  await server.stop();
});

describe("Connection", () => {
  it("completes the hello handshake", async () => {
    const { connection, status } = await Connection.open(
      server.wsUrl,
      "Observer",
      "conn-test",
    );
    expect(status).toBe("GOOD");
    connection.close();
  });

  it("reports a role conflict status", async () => {
    const first = await Connection.open(server.wsUrl, "PlayerOne", "holder");
    expect(first.status).toBe("GOOD");
    const second = await Connection.open(server.wsUrl, "PlayerOne", "intruder");
    expect(second.status).toBe("BAD_INVALID_STATE");
    second.connection.close();
    first.connection.close();
    // the role frees up once the holder is gone
    await until(() => true, "noop");
  });

  it("answers unknown methods with BAD_NOT_FOUND", async () => {
    const { connection } = await Connection.open(server.wsUrl, "Observer", "rpc-test");
    const result = await connection.call("frobnicate");
    expect(result.status).toBe("BAD_NOT_FOUND");
    connection.close();
  });

  it("delivers retained topic values to late subscribers", async () => {
    const admin = await RawClient.open(server.wsUrl, "Observer", "admin-conn");
    const p1 = await RawClient.open(server.wsUrl, "PlayerOne", "p1-conn");
    const p2 = await RawClient.open(server.wsUrl, "PlayerTwo", "p2-conn");
    expect((await admin.call("initGame")).status).toBe("GOOD");
    expect((await admin.call("startGame")).status).toBe("GOOD");

    const { connection } = await Connection.open(server.wsUrl, "Observer", "late-sub");
    const states: unknown[] = [];
    connection.subscribe("GameState", (_seq, payload) => states.push(payload));
    await until(() => states.length > 0, "retained GameState");
    expect(states[0]).toHaveProperty("board");
    connection.close();
    await admin.call("resetGame");
    admin.close();
    p1.close();
    p2.close();
  });
});
