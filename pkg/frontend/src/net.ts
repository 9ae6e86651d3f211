/**
 * Socket plumbing.  One WebSocket, HELLO as actor (actors receive the
 * same broadcast stream displays do, so a single combined connection
 * covers both roles), parsed messages handed to the caller in arrival
 * order.  Reconnects with a fixed delay so a restarted server picks the
 * view back up; the next SNAPSHOT replaces any stale state.
 */

import { actionFrame, helloFrame, parseServerMessage, type Action, type Role, type ServerMessage } from "./protocol.js";
import type { ConnectionStatus } from "./viewmodel.js";

/** The slice of the WebSocket API the client uses (browser or ws). */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", listener: () => void): void;
  addEventListener(type: "close", listener: () => void): void;
  addEventListener(type: "error", listener: () => void): void;
  addEventListener(type: "message", listener: (event: { data: unknown }) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  role?: Role;
  reconnectDelayMs?: number | null;
  factory?: SocketFactory;
}

export class WorkbenchClient {
  private socket: SocketLike | null = null;
  private sid = "";
  private open = false;
  private disposed = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;
  private readonly role: Role;
  private readonly reconnectDelayMs: number | null;
  private readonly factory: SocketFactory;

  constructor(
    private readonly url: string,
    private readonly onMessage: (msg: ServerMessage) => void,
    private readonly onStatus: (status: ConnectionStatus) => void,
    options: ClientOptions = {},
  ) {
    this.role = options.role ?? "actor";
    this.reconnectDelayMs = options.reconnectDelayMs === undefined ? 1000 : options.reconnectDelayMs;
    this.factory = options.factory ?? ((url) => new WebSocket(url) as unknown as SocketLike);
  }

  connect(): void {
    if (this.disposed) return;
    this.onStatus("connecting");
    let socket: SocketLike;
    try {
      socket = this.factory(this.url);
    } catch {
      this.onStatus("error");
      this.scheduleReconnect();
      return;
    }
    this.socket = socket;
    socket.addEventListener("open", () => {
      this.open = true;
      socket.send(helloFrame(this.role));
      this.onStatus("open");
    });
    socket.addEventListener("message", (event) => {
      const msg = parseServerMessage(String(event.data));
      if (msg === null) return; // tolerate unknown or malformed frames
      this.sid = msg.sid;
      this.onMessage(msg);
    });
    socket.addEventListener("error", () => {
      if (!this.open) this.onStatus("error");
    });
    socket.addEventListener("close", () => {
      this.open = false;
      this.socket = null;
      if (!this.disposed) {
        this.onStatus("closed");
        this.scheduleReconnect();
      }
    });
  }

  private scheduleReconnect(): void {
    if (this.disposed || this.reconnectDelayMs === null || this.retryTimer !== null) return;
    this.retryTimer = setTimeout(() => {
      this.retryTimer = null;
      this.connect();
    }, this.reconnectDelayMs);
  }

  /** Send an ACTION; silently dropped while the socket is down. */
  send(action: Action): void {
    if (this.socket === null || !this.open) return;
    this.socket.send(actionFrame(this.sid, action));
  }

  dispose(): void {
    this.disposed = true;
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.socket?.close();
    this.socket = null;
  }
}
