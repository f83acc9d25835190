/** Page entry point: read settings from the query string and boot. */

import { initApp } from "./app.js";
import type { PeerRole } from "./protocol.js";

const ROLES: Record<string, PeerRole> = {
  p1: "PlayerOne",
  p2: "PlayerTwo",
  observer: "Observer",
};

function defaultServer(): string {
  const host = window.location.hostname || "127.0.0.1";
  return `ws://${host}:9301`;
}

const params = new URLSearchParams(window.location.search);
const role = ROLES[params.get("role") ?? "observer"] ?? "Observer";
const server = params.get("server") ?? defaultServer();
const name = params.get("name") ?? `web-${role.toLowerCase()}-${Date.now() % 10000}`;

const root = document.getElementById("app");
if (root) {
  void initApp(root, { server, role, name });
}
