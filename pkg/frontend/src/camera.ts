import type { CameraPose, Vec3 } from "./protocol.js";

/** Steps per full horizontal revolution. Angles are stored as integer step
 *  counts so a drag that sums to one revolution lands back on the exact same
 *  pose, floats and all. */
export const TURN_STEPS = 512;

const MAX_ELEVATION_STEPS = 120; // about 84 degrees, keeps the pole singularity away
const ZOOM_BASE = 1.1;

/** Orbit camera around a fixed center: azimuth/elevation/distance detents. */
export class OrbitCamera {
  azimuth = 0;
  elevation = 24;
  zoom = 0;
  fov = 40;

  private center: Vec3 = [0, 0, 0];
  private fitDistance = 10;

  /** Frame the given world bounds so the whole model stays in view. */
  fit(lo: Vec3, hi: Vec3): void {
    this.center = [0, 1, 2].map((a) => 0.5 * (lo[a]! + hi[a]!)) as Vec3;
    const radius = 0.5 * Math.hypot(hi[0]! - lo[0]!, hi[1]! - lo[1]!, hi[2]! - lo[2]!);
    const safe = Math.max(radius, 1e-6);
    this.fitDistance = (1.15 * safe) / Math.sin((this.fov * Math.PI) / 360);
  }

  orbitBy(azimuthSteps: number, elevationSteps: number): void {
    const wrap = (s: number) => ((s % TURN_STEPS) + TURN_STEPS) % TURN_STEPS;
    this.azimuth = wrap(this.azimuth + Math.round(azimuthSteps));
    this.elevation = Math.max(
      -MAX_ELEVATION_STEPS,
      Math.min(MAX_ELEVATION_STEPS, this.elevation + Math.round(elevationSteps)),
    );
  }

  /** Slide the orbit center in the current view plane; one step is a small
   *  fraction of the viewing distance so pan speed tracks zoom. */
  panBy(rightSteps: number, upSteps: number): void {
    const az = (2 * Math.PI * this.azimuth) / TURN_STEPS;
    const el = (2 * Math.PI * this.elevation) / TURN_STEPS;
    const right: Vec3 = [Math.cos(az), 0, -Math.sin(az)];
    const up: Vec3 = [-Math.sin(el) * Math.sin(az), Math.cos(el), -Math.sin(el) * Math.cos(az)];
    const scale = 0.002 * this.distance();
    this.center = [0, 1, 2].map(
      (a) => this.center[a]! + scale * (rightSteps * right[a]! + upSteps * up[a]!),
    ) as Vec3;
  }

  zoomBy(steps: number): void {
    this.zoom = Math.max(-40, Math.min(40, this.zoom + Math.round(steps)));
  }

  distance(): number {
    return this.fitDistance * Math.pow(ZOOM_BASE, -this.zoom);
  }

  pose(): CameraPose {
    const az = (2 * Math.PI * this.azimuth) / TURN_STEPS;
    const el = (2 * Math.PI * this.elevation) / TURN_STEPS;
    const d = this.distance();
    const pos: Vec3 = [
      this.center[0] + d * Math.cos(el) * Math.sin(az),
      this.center[1] + d * Math.sin(el),
      this.center[2] + d * Math.cos(el) * Math.cos(az),
    ];
    return { pos, look: [...this.center], up: [0, 1, 0], fov: this.fov };
  }
}
