import { OrbitCamera } from "./camera.js";
import { TfModel } from "./tf.js";
import { Transport } from "./transport.js";
import type { TransportOptions } from "./transport.js";
import type { ClientMessage, FrameHeader, FrameStats, InfoMessage, RenderParams } from "./protocol.js";

type EditKind = "camera" | "tf" | "iso" | "params";

export interface ViewerEvents {
  onFrame?: (png: ArrayBuffer, stats: FrameStats) => void;
  onInfo?: (info: InfoMessage) => void;
  onStatus?: (status: "connecting" | "open" | "closed") => void;
}

export interface ViewerOptions {
  width: number;
  height: number;
  /** Floor between request_frame sends while dragging; 34ms ≈ 29 Hz. */
  minFrameIntervalMs?: number;
  now?: () => number;
  schedule?: (fn: () => void, ms: number) => unknown;
  transport?: TransportOptions;
}

/** Interaction hub: owns the local editing state (orbit camera, transfer
 *  function, iso/quality settings), batches each burst of edits into ordered
 *  set_* messages followed by exactly one request_frame, and fans incoming
 *  frames out to the UI. Edits made mid-burst coalesce; their first-touch
 *  order is preserved on the wire. */
export class Viewer {
  readonly camera = new OrbitCamera();
  readonly tf: TfModel;
  readonly transport: Transport;

  iso: number | null = null;
  params: RenderParams = { rateScale: 1, gradientMode: "analytic" };
  width: number;
  height: number;

  lastStats: FrameStats | null = null;
  info: InfoMessage | null = null;

  private pending: EditKind[] = [];
  private frameWanted = false;
  private flushTimer: unknown = null;
  private lastFlushAt = -Infinity;

  private readonly minInterval: number;
  private readonly now: () => number;
  private readonly schedule: (fn: () => void, ms: number) => unknown;

  constructor(url: string, options: ViewerOptions, private readonly events: ViewerEvents = {}) {
    this.width = options.width;
    this.height = options.height;
    this.minInterval = options.minFrameIntervalMs ?? 34;
    this.now = options.now ?? (() => Date.now());
    this.schedule = options.schedule ?? ((fn, ms) => setTimeout(fn, ms));
    this.tf = new TfModel([0, 1]);
    this.transport = new Transport(
      url,
      {
        onInfo: (info) => this.handleInfo(info),
        onFrame: (header, png) => this.handleFrame(header, png),
        onStatus: (status) => events.onStatus?.(status),
      },
      options.transport,
    );
  }

  connect(): void {
    this.transport.connect();
    this.transport.send({ type: "hello" });
  }

  // -- interactions; each schedules an ordered flush ------------------------

  orbitBy(azimuthSteps: number, elevationSteps: number): void {
    this.camera.orbitBy(azimuthSteps, elevationSteps);
    this.touch("camera");
  }

  zoomBy(steps: number): void {
    this.camera.zoomBy(steps);
    this.touch("camera");
  }

  panBy(rightSteps: number, upSteps: number): void {
    this.camera.panBy(rightSteps, upSteps);
    this.touch("camera");
  }

  setIso(value: number | null): void {
    this.iso = value;
    this.touch("iso");
  }

  setRateScale(rateScale: number): void {
    this.params = { ...this.params, rateScale };
    this.touch("params");
  }

  setGradientMode(gradientMode: RenderParams["gradientMode"]): void {
    this.params = { ...this.params, gradientMode };
    this.touch("params");
  }

  /** Call after mutating `tf` through the editor. */
  tfEdited(): void {
    this.touch("tf");
  }

  resize(width: number, height: number): void {
    this.width = width;
    this.height = height;
    this.requestFrame();
  }

  /** Ask for a redraw without changing settings. */
  requestFrame(): void {
    this.frameWanted = true;
    this.scheduleFlush();
  }

  // -- internals -------------------------------------------------------------

  private touch(kind: EditKind): void {
    if (!this.pending.includes(kind)) this.pending.push(kind);
    this.frameWanted = true;
    this.scheduleFlush();
  }

  private scheduleFlush(): void {
    if (this.flushTimer !== null) return;
    const wait = Math.max(0, this.minInterval - (this.now() - this.lastFlushAt));
    this.flushTimer = this.schedule(() => this.flush(), wait);
  }

  private flush(): void {
    this.flushTimer = null;
    this.lastFlushAt = this.now();
    const edits = this.pending;
    this.pending = [];
    for (const kind of edits) this.transport.send(this.editMessage(kind));
    if (this.frameWanted) {
      this.frameWanted = false;
      this.transport.send({ type: "request_frame", width: this.width, height: this.height });
    }
  }

  private editMessage(kind: EditKind): ClientMessage {
    switch (kind) {
      case "camera":
        return { type: "set_camera", ...this.camera.pose() };
      case "tf":
        return { type: "set_tf", domain: this.tf.domain, rgba: this.tf.ramp() };
      case "iso":
        return { type: "set_iso", value: this.iso };
      case "params":
        return { type: "set_params", ...this.params };
    }
  }

  private handleInfo(info: InfoMessage): void {
    this.info = info;
    this.camera.fit(info.bounds.lo, info.bounds.hi);
    const [lo, hi] = info.stats.valueRange;
    this.tf.domain = hi > lo ? [lo, hi] : [lo, lo + 1];
    this.events.onInfo?.(info);
    // push the initial editing state so the first frame matches the UI
    this.touch("camera");
    this.touch("tf");
  }

  private handleFrame(header: FrameHeader, png: ArrayBuffer): void {
    this.lastStats = header.stats;
    this.events.onFrame?.(png, header.stats);
  }
}
