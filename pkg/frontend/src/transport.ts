import { parseServerMessage } from "./protocol.js";
import type { ClientMessage, ErrorMessage, FrameHeader, InfoMessage } from "./protocol.js";

/** The subset of the WebSocket surface the transport needs; tests inject a
 *  scripted stand-in through `socketFactory`. */
export interface SocketLike {
  binaryType: string;
  readyState: number;
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null;
}

const SOCKET_OPEN = 1;

export type ConnectionStatus = "connecting" | "open" | "closed";

export interface TransportHandlers {
  onInfo?: (info: InfoMessage) => void;
  onFrame?: (header: FrameHeader, png: ArrayBuffer) => void;
  onServerError?: (err: ErrorMessage) => void;
  onStatus?: (status: ConnectionStatus) => void;
}

export interface TransportOptions {
  socketFactory?: (url: string) => SocketLike;
  schedule?: (fn: () => void, ms: number) => unknown;
  /** Initial reconnect delay; doubles per failure up to maxBackoffMs. */
  backoffMs?: number;
  maxBackoffMs?: number;
}

/** Ordered duplex connection to the render service.
 *
 *  Outbound messages are queued until the socket opens and always leave in
 *  call order. Inbound frame headers are paired with the binary payload that
 *  follows them; frames whose id is not strictly newer than the last one
 *  delivered are dropped so a slow frame can never overwrite a fresh one.
 *  The connection retries forever with exponential backoff.
 */
export class Transport {
  private socket: SocketLike | null = null;
  private queue: string[] = [];
  private pendingHeader: FrameHeader | null = null;
  private lastFrameId = -1;
  private attempts = 0;
  private closed = false;

  private readonly makeSocket: (url: string) => SocketLike;
  private readonly schedule: (fn: () => void, ms: number) => unknown;
  private readonly backoffMs: number;
  private readonly maxBackoffMs: number;

  constructor(
    private readonly url: string,
    private readonly handlers: TransportHandlers = {},
    options: TransportOptions = {},
  ) {
    this.makeSocket = options.socketFactory ?? ((u) => new WebSocket(u) as unknown as SocketLike);
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.backoffMs = options.backoffMs ?? 500;
    this.maxBackoffMs = options.maxBackoffMs ?? 8000;
  }

  connect(): void {
    this.closed = false;
    this.open();
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
  }

  send(msg: ClientMessage): void {
    const text = JSON.stringify(msg);
    if (this.socket && this.socket.readyState === SOCKET_OPEN) {
      this.socket.send(text);
    } else {
      this.queue.push(text);
    }
  }

  private open(): void {
    this.handlers.onStatus?.("connecting");
    const socket = this.makeSocket(this.url);
    socket.binaryType = "arraybuffer";
    this.socket = socket;
    this.pendingHeader = null;
    socket.onopen = () => {
      this.attempts = 0;
      this.handlers.onStatus?.("open");
      const backlog = this.queue;
      this.queue = [];
      for (const text of backlog) socket.send(text);
    };
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      if (this.socket !== socket) return; // superseded by a newer connection
      this.socket = null;
      this.handlers.onStatus?.("closed");
      if (this.closed) return;
      const delay = Math.min(this.backoffMs * 2 ** this.attempts, this.maxBackoffMs);
      this.attempts += 1;
      this.schedule(() => {
        if (!this.closed) this.open();
      }, delay);
    };
  }

  private receive(data: string | ArrayBuffer): void {
    if (typeof data !== "string") {
      const header = this.pendingHeader;
      this.pendingHeader = null;
      if (header && header.id > this.lastFrameId) {
        this.lastFrameId = header.id;
        this.handlers.onFrame?.(header, data);
      }
      return;
    }
    const msg = parseServerMessage(data);
    if (msg.type === "info") this.handlers.onInfo?.(msg);
    else if (msg.type === "frame") this.pendingHeader = msg;
    else this.handlers.onServerError?.(msg);
  }
}
