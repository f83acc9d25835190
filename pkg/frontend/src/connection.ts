/** WebSocket session: hello handshake, correlated calls, topic streams. */

import {
  PROTOCOL_VERSION,
  type PeerRole,
  type StatusCode,
  type WireMessage,
} from "./protocol.js";

export type PublishHandler = (seq: number, payload: unknown) => void;

export interface CallResult {
  status: StatusCode;
  payload: unknown;
}

const CALL_TIMEOUT_MS = 5000;

export class Connection {
  private nextId = 1;
  private pending = new Map<number, (msg: WireMessage) => void>();
  private handlers = new Map<string, PublishHandler[]>();
  private closeListeners: Array<() => void> = [];
  private closed = false;

  private constructor(private ws: WebSocket) {}

  /** Dial, say hello, and resolve once the server has answered it. */
  static async open(
    url: string,
    role: PeerRole,
    name: string,
  ): Promise<{ connection: Connection; status: StatusCode }> {
    const ws = new WebSocket(url);
    const connection = new Connection(ws);
    await new Promise<void>((resolve, reject) => {
      ws.onopen = () => resolve();
      ws.onerror = () => reject(new Error(`cannot reach ${url}`));
    });
    ws.onmessage = (event) => connection.dispatch(String(event.data));
    ws.onclose = () => connection.handleClose();
    ws.onerror = () => connection.handleClose();
    const status = await new Promise<StatusCode>((resolve) => {
      connection.pending.set(0, (msg) => resolve(msg.status ?? "BAD_INTERNAL"));
      connection.send({
        kind: "hello",
        id: 0,
        payload: { role, name, protocol_version: PROTOCOL_VERSION },
      });
      setTimeout(() => {
        if (connection.pending.delete(0)) resolve("BAD_TIMEOUT");
      }, CALL_TIMEOUT_MS);
    });
    return { connection, status };
  }

  get isClosed(): boolean {
    return this.closed;
  }

  onClose(listener: () => void): void {
    this.closeListeners.push(listener);
  }

  subscribe(topic: string, handler: PublishHandler): void {
    const existing = this.handlers.get(topic);
    if (existing) {
      existing.push(handler);
      return; // already subscribed on the wire
    }
    this.handlers.set(topic, [handler]);
    this.send({ kind: "subscribe", topic });
  }

  call(method: string, payload?: unknown, timeoutMs = CALL_TIMEOUT_MS): Promise<CallResult> {
    if (this.closed) {
      return Promise.resolve({ status: "BAD_SESSION_CLOSED", payload: null });
    }
    const id = this.nextId++;
    return new Promise((resolve) => {
      this.pending.set(id, (msg) =>
        resolve({ status: msg.status ?? "BAD_INTERNAL", payload: msg.payload ?? null }),
      );
      this.send({ kind: "rpc_request", id, method, payload });
      setTimeout(() => {
        if (this.pending.delete(id)) resolve({ status: "BAD_TIMEOUT", payload: null });
      }, timeoutMs);
    });
  }

  close(): void {
    this.ws.close();
    this.handleClose();
  }

  private send(msg: WireMessage): void {
    if (!this.closed && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(msg));
    }
  }

  private dispatch(raw: string): void {
    let msg: WireMessage;
    try {
      msg = JSON.parse(raw) as WireMessage;
    } catch {
      return; // not ours to crash the page over
    }
    switch (msg.kind) {
      case "publish":
        for (const handler of this.handlers.get(msg.topic ?? "") ?? []) {
          handler(msg.seq ?? 0, msg.payload ?? null);
        }
        break;
      case "rpc_response": {
        const resolver = this.pending.get(msg.id ?? -1);
        if (resolver) {
          this.pending.delete(msg.id ?? -1);
          resolver(msg);
        }
        break;
      }
      case "ping":
        this.send({ kind: "pong" });
        break;
      default:
        break; // pongs and anything unexpected
    }
  }

  private handleClose(): void {
    if (this.closed) return;
    this.closed = true;
    for (const resolver of this.pending.values()) {
      resolver({ kind: "rpc_response", id: 0, status: "BAD_SESSION_CLOSED" });
    }
    this.pending.clear();
    for (const listener of this.closeListeners) listener();
  }
}
