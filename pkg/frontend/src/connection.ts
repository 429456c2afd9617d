import { Command, commandMessage, parseServerMessage, Snapshot } from "./protocol.js";
import { ConnectionStatus } from "./state.js";

// structural subset of WebSocket so tests can inject a fake
export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  readyState: number;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ConnectionHandlers {
  onSnapshot(snap: Snapshot): void;
  onStatus(status: ConnectionStatus): void;
  onServerError?(msg: string): void;
}

const WS_OPEN = 1;

// Keeps one socket to the teleop server alive, reconnecting with
// exponential backoff whenever it drops. Status changes are surfaced so
// the UI can show "connected" / "retrying".
export class Connection {
  private ws: SocketLike | null = null;
  private delayMs: number;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private url: string,
    private handlers: ConnectionHandlers,
    private factory: SocketFactory = (u) =>
      new WebSocket(u) as unknown as SocketLike,
    private baseDelayMs = 500,
    private maxDelayMs = 8000,
  ) {
    this.delayMs = baseDelayMs;
    this.open();
  }

  private open(): void {
    this.timer = null;
    let ws: SocketLike;
    try {
      ws = this.factory(this.url);
    } catch (err) {
      console.warn("connection attempt failed", err);
      this.scheduleRetry();
      return;
    }
    this.ws = ws;
    ws.onopen = () => {
      this.delayMs = this.baseDelayMs;
      this.handlers.onStatus("connected");
    };
    ws.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg === null) {
        return; // malformed frame already logged, UI unchanged
      }
      if (msg.kind === "error") {
        console.error("server rejected a message:", msg.msg);
        this.handlers.onServerError?.(msg.msg);
      } else {
        this.handlers.onSnapshot(msg.snap);
      }
    };
    ws.onclose = () => this.scheduleRetry();
    ws.onerror = () => {
      // the close handler owns the retry; nothing to do here
    };
  }

  private scheduleRetry(): void {
    if (this.stopped || this.timer !== null) {
      return;
    }
    this.ws = null;
    this.handlers.onStatus("retrying");
    this.timer = setTimeout(() => this.open(), this.delayMs);
    this.delayMs = Math.min(this.delayMs * 2, this.maxDelayMs);
  }

  // Returns false when disconnected; the command is dropped, not queued.
  send(cmd: Command): boolean {
    if (this.ws === null || this.ws.readyState !== WS_OPEN) {
      return false;
    }
    this.ws.send(commandMessage(cmd));
    return true;
  }

  close(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.ws?.close();
    this.ws = null;
  }
}
