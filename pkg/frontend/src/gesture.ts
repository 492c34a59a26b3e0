/** Gesture batching: one pen-down -> pen-up trail becomes ONE posted stroke.
 *
 * Pointer events arrive at display rate; posting each one would flood the
 * service and defeat its debounce. The recorder accumulates ray samples and
 * emits a single stroke-log payload on pen-up.
 */

import { pointerToRaySample } from "./rays.js";
import type { CanvasPose, StrokeMode, StrokePayload } from "./types.js";

let gestureCounter = 0;

export class GestureRecorder {
  private samples: StrokePayload["samples"] = [];
  private lastT = -Infinity;
  private active = false;

  constructor(
    private readonly pose: CanvasPose,
    private readonly mode: StrokeMode,
    private readonly radiusPx: number,
  ) {}

  get isActive(): boolean {
    return this.active;
  }

  get sampleCount(): number {
    return this.samples.length;
  }

  pointerDown(px: number, py: number, tMs: number): void {
    if (this.active) {
      throw new Error("gesture already in progress");
    }
    this.active = true;
    this.samples = [];
    this.lastT = -Infinity;
    this.push(px, py, tMs);
  }

  pointerMove(px: number, py: number, tMs: number): void {
    if (!this.active) return; // hover without pen-down: ignored
    this.push(px, py, tMs);
  }

  /** Ends the gesture; returns the single stroke to post, or null if empty. */
  pointerUp(px: number, py: number, tMs: number): StrokePayload | null {
    if (!this.active) return null;
    this.push(px, py, tMs);
    this.active = false;
    if (this.samples.length === 0) return null;
    const p = this.pose;
    gestureCounter += 1;
    return {
      stroke_id: `gesture-${gestureCounter}`,
      mode: this.mode,
      radius_px: this.radiusPx,
      canvas: {
        origin: p.origin,
        u_axis: p.uAxis,
        v_axis: p.vAxis,
        width_mm: p.widthMm,
        height_mm: p.heightMm,
        axis: p.axis,
        index: p.index,
        pixel_dims: p.pixelDims,
      },
      samples: this.samples,
    };
  }

  private push(px: number, py: number, tMs: number): void {
    // the service requires non-decreasing timestamps; clock jitter between
    // pointer events must not invalidate the whole gesture
    const t = Math.max(tMs, this.lastT);
    this.lastT = t;
    this.samples.push(pointerToRaySample(this.pose, px, py, t, true));
  }
}
