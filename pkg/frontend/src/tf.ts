export const RAMP_SIZE = 256;

/** One editable stop: a normalized position in [0,1] over the domain, a
 *  color, and an opacity. */
export interface ControlPoint {
  x: number;
  color: [number, number, number];
  alpha: number;
}

const clamp01 = (v: number) => Math.max(0, Math.min(1, v));

/** Piecewise-linear transfer function model backing the editor. Control
 *  points stay sorted by position; the wire format is always the full
 *  256-entry RGBA ramp. */
export class TfModel {
  domain: [number, number];
  points: ControlPoint[];

  constructor(domain: [number, number]) {
    this.domain = domain;
    // default: transparent dark-blue lows ramping to opaque warm highs
    this.points = [
      { x: 0, color: [0.1, 0.1, 0.4], alpha: 0 },
      { x: 1, color: [1.0, 0.9, 0.6], alpha: 0.8 },
    ];
  }

  /** Insert a point and return its index after sorting. */
  addPoint(p: ControlPoint): number {
    const point = { ...p, x: clamp01(p.x), alpha: clamp01(p.alpha) };
    this.points.push(point);
    this.sort();
    return this.points.indexOf(point);
  }

  /** Move/edit one point; endpoints keep their positions pinned. */
  movePoint(index: number, x: number, alpha: number): void {
    const p = this.points[index];
    if (!p) return;
    const interior = index > 0 && index < this.points.length - 1;
    if (interior) p.x = clamp01(x);
    p.alpha = clamp01(alpha);
    this.sort();
  }

  removePoint(index: number): void {
    if (index <= 0 || index >= this.points.length - 1) return; // endpoints stay
    this.points.splice(index, 1);
  }

  setUniformAlpha(alpha: number): void {
    for (const p of this.points) p.alpha = clamp01(alpha);
  }

  private sort(): void {
    this.points.sort((a, b) => a.x - b.x);
  }

  /** Expand the control points into the 256-entry RGBA ramp. */
  ramp(): number[][] {
    const out: number[][] = [];
    let seg = 0;
    for (let i = 0; i < RAMP_SIZE; i++) {
      const x = i / (RAMP_SIZE - 1);
      while (seg < this.points.length - 2 && this.points[seg + 1]!.x < x) seg++;
      const a = this.points[seg]!;
      const b = this.points[seg + 1] ?? a;
      const span = b.x - a.x;
      const t = span > 0 ? clamp01((x - a.x) / span) : x <= a.x ? 0 : 1;
      out.push([
        a.color[0] + t * (b.color[0] - a.color[0]),
        a.color[1] + t * (b.color[1] - a.color[1]),
        a.color[2] + t * (b.color[2] - a.color[2]),
        a.alpha + t * (b.alpha - a.alpha),
      ]);
    }
    return out;
  }
}
