import type { InfoMessage } from "../src/protocol";
import type { SocketLike } from "../src/transport";

/** Scripted WebSocket stand-in. Tests drive `open`/`close`/`emit*` by hand;
 *  everything the code under test sends lands in `sent`. */
export class FakeSocket implements SocketLike {
  binaryType = "blob";
  readyState = 0; // CONNECTING
  sent: string[] = [];

  onopen: (() => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onmessage: ((ev: { data: string | ArrayBuffer }) => void) | null = null;

  /** Hook for a fake server that wants to answer sends synchronously. */
  onsend: ((text: string) => void) | null = null;

  send(text: string): void {
    if (this.readyState !== 1) throw new Error("send on a socket that is not open");
    this.sent.push(text);
    this.onsend?.(text);
  }

  open(): void {
    this.readyState = 1;
    this.onopen?.();
  }

  close(): void {
    if (this.readyState === 3) return;
    this.readyState = 3;
    this.onclose?.();
  }

  emitText(msg: unknown): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  emitBinary(bytes: Uint8Array): void {
    const buf = bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength);
    this.onmessage?.({ data: buf as ArrayBuffer });
  }
}

interface Task {
  at: number;
  seq: number;
  fn: () => void;
}

/** Deterministic replacement for setTimeout/Date.now. */
export class FakeClock {
  now = 0;
  private seq = 0;
  private tasks: Task[] = [];

  readonly schedule = (fn: () => void, ms: number): unknown => {
    const task = { at: this.now + Math.max(0, ms), seq: this.seq++, fn };
    this.tasks.push(task);
    return task;
  };

  /** Advance the clock, running due tasks in (time, creation) order. */
  advance(ms: number): void {
    const target = this.now + ms;
    for (;;) {
      let due: Task | null = null;
      for (const t of this.tasks) {
        if (t.at > target) continue;
        if (!due || t.at < due.at || (t.at === due.at && t.seq < due.seq)) due = t;
      }
      if (!due) break;
      this.tasks.splice(this.tasks.indexOf(due), 1);
      this.now = Math.max(this.now, due.at);
      due.fn();
    }
    this.now = target;
  }

  pendingCount(): number {
    return this.tasks.length;
  }
}

export function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

/** Expand a state snapshot into a small deterministic byte payload, so equal
 *  render settings produce byte-identical fake frames. */
export function frameBytes(snapshot: string): Uint8Array {
  const out = new Uint8Array(16);
  let x = fnv1a(snapshot) || 1;
  for (let i = 0; i < out.length; i++) {
    x = (Math.imul(x, 1664525) + 1013904223) >>> 0;
    out[i] = x & 0xff;
  }
  return out;
}

export const TEST_INFO: InfoMessage = {
  type: "info",
  fields: ["density"],
  bounds: { lo: [0, 0, 0], hi: [32, 24, 16] },
  stats: { cells: 1000, bricks: 120, regions: 14, valueRange: [0, 2] },
};

export interface ReceivedMessage {
  type: string;
  text: string;
  at: number;
}

/** Minimal render-service double: answers hello with a fixed info message,
 *  remembers the latest set_* messages verbatim, and answers request_frame
 *  with a header plus bytes derived only from the remembered state. */
export class FakeServer {
  socket: FakeSocket | null = null;
  received: ReceivedMessage[] = [];
  framesSent: Uint8Array[] = [];
  private state = new Map<string, string>();
  private nextFrameId = 1;

  constructor(private readonly nowFn: () => number = () => 0) {}

  readonly factory = (_url: string): SocketLike => {
    const socket = new FakeSocket();
    socket.onsend = (text) => this.handle(socket, text);
    this.socket = socket;
    return socket;
  };

  open(): void {
    this.socket?.open();
  }

  /** Received message types, optionally only those after a given index. */
  typesFrom(start = 0): string[] {
    return this.received.slice(start).map((m) => m.type);
  }

  lastOfType(type: string): ReceivedMessage | undefined {
    for (let i = this.received.length - 1; i >= 0; i--) {
      const m = this.received[i];
      if (m && m.type === type) return m;
    }
    return undefined;
  }

  private handle(socket: FakeSocket, text: string): void {
    const msg = JSON.parse(text) as { type: string; width?: number; height?: number };
    this.received.push({ type: msg.type, text, at: this.nowFn() });
    if (msg.type === "hello") {
      socket.emitText(TEST_INFO);
    } else if (msg.type.startsWith("set_")) {
      this.state.set(msg.type, text);
    } else if (msg.type === "request_frame") {
      const id = this.nextFrameId++;
      const parts = ["set_camera", "set_tf", "set_iso", "set_params"].map(
        (k) => this.state.get(k) ?? "",
      );
      const bytes = frameBytes(`${parts.join("|")}|${msg.width}x${msg.height}`);
      socket.emitText({
        type: "frame",
        id,
        width: msg.width,
        height: msg.height,
        encoding: "png",
        stats: { ms: 5, regions: 7, samples: this.transparent() ? 0 : 4321, bvhRebuildMs: 0 },
      });
      socket.emitBinary(bytes);
      this.framesSent.push(bytes);
    }
  }

  private transparent(): boolean {
    const tf = this.state.get("set_tf");
    if (!tf) return false;
    const parsed = JSON.parse(tf) as { rgba: number[][] };
    return parsed.rgba.every((row) => row[3] === 0);
  }
}
