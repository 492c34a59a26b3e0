/** Brush/eraser tool state with its UI invariants enforced at the edge. */

import type { SliceAxis, StrokeMode } from "./types.js";

export interface ToolStateInit {
  mode?: StrokeMode;
  radiusPx?: number;
  overlayAlpha?: number;
  activeAxis?: SliceAxis;
  activeIndex?: number;
}

export class ToolState {
  mode: StrokeMode;
  private _radiusPx: number;
  private _overlayAlpha: number;
  private _activeAxis: SliceAxis;
  private _activeIndex: number;

  constructor(
    readonly dims: [number, number, number],
    init: ToolStateInit = {},
  ) {
    this.mode = init.mode ?? "additive";
    this._radiusPx = 0;
    this._overlayAlpha = 0.5;
    this._activeAxis = init.activeAxis ?? "axial";
    this._activeIndex = 0;
    this.radiusPx = init.radiusPx ?? 3;
    this.overlayAlpha = init.overlayAlpha ?? 0.5;
    this.activeIndex = init.activeIndex ?? 0;
  }

  /** Slice count along the active axis. */
  get extent(): number {
    const [nx, ny, nz] = this.dims;
    return this._activeAxis === "axial" ? nz : this._activeAxis === "coronal" ? ny : nx;
  }

  get radiusPx(): number {
    return this._radiusPx;
  }

  set radiusPx(value: number) {
    if (!Number.isFinite(value) || value < 0) {
      throw new RangeError(`brush radius must be >= 0, got ${value}`);
    }
    this._radiusPx = value;
  }

  get overlayAlpha(): number {
    return this._overlayAlpha;
  }

  set overlayAlpha(value: number) {
    if (!Number.isFinite(value) || value < 0 || value > 1) {
      throw new RangeError(`overlay alpha must be in [0, 1], got ${value}`);
    }
    this._overlayAlpha = value;
  }

  get activeAxis(): SliceAxis {
    return this._activeAxis;
  }

  set activeAxis(axis: SliceAxis) {
    this._activeAxis = axis;
    // re-clamp: a valid axial index may exceed the sagittal extent
    this._activeIndex = Math.min(this._activeIndex, this.extent - 1);
  }

  get activeIndex(): number {
    return this._activeIndex;
  }

  set activeIndex(value: number) {
    if (!Number.isInteger(value) || value < 0 || value >= this.extent) {
      throw new RangeError(
        `slice index ${value} out of range [0, ${this.extent})`,
      );
    }
    this._activeIndex = value;
  }

  /** Indices to prefetch around the active slice (clamped, +/- radius). */
  prefetchIndices(radius = 8): number[] {
    const lo = Math.max(0, this._activeIndex - radius);
    const hi = Math.min(this.extent - 1, this._activeIndex + radius);
    const out: number[] = [];
    for (let i = lo; i <= hi; i++) out.push(i);
    return out;
  }
}
