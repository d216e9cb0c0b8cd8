/** Wire types for the render-service connection: JSON text messages both
 *  ways, plus one binary PNG payload following every frame header. */

export type Vec3 = [number, number, number];

export interface CameraPose {
  pos: Vec3;
  look: Vec3;
  up: Vec3;
  fov: number;
}

export interface RenderParams {
  rateScale: number;
  gradientMode: "none" | "analytic" | "central" | "clampedCentral";
}

export interface FrameStats {
  ms: number;
  regions: number;
  samples: number;
  bvhRebuildMs: number;
}

export type ClientMessage =
  | { type: "hello" }
  | ({ type: "set_camera" } & CameraPose)
  | { type: "set_tf"; domain: [number, number]; rgba: number[][] }
  | { type: "set_iso"; value: number | null }
  | ({ type: "set_params" } & RenderParams)
  | { type: "request_frame"; width: number; height: number };

export interface InfoMessage {
  type: "info";
  fields: string[];
  bounds: { lo: Vec3; hi: Vec3 };
  stats: { cells: number; bricks: number; regions: number; valueRange: [number, number] };
}

export interface FrameHeader {
  type: "frame";
  id: number;
  width: number;
  height: number;
  encoding: "png";
  stats: FrameStats;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = InfoMessage | FrameHeader | ErrorMessage;

/** Parse one text frame from the server; throws on anything malformed. */
export function parseServerMessage(text: string): ServerMessage {
  const raw: unknown = JSON.parse(text);
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new Error("server message is not an object");
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "info":
    case "frame":
    case "error":
      return msg as unknown as ServerMessage;
    default:
      throw new Error(`unknown server message type ${String(msg.type)}`);
  }
}
