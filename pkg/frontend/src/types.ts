/** Shared types for the annotation studio's service contracts. */

export type Vec3 = [number, number, number];

export type StrokeMode = "additive" | "subtractive";

export type SliceAxis = "axial" | "coronal" | "sagittal";

/** Physical canvas rectangle a slice is bound to (mm, world space). */
export interface CanvasPose {
  origin: Vec3;
  uAxis: Vec3;
  vAxis: Vec3;
  widthMm: number;
  heightMm: number;
  axis: SliceAxis;
  index: number;
  pixelDims: [number, number];
}

export interface StrokeSample {
  tip: Vec3;
  direction: Vec3;
  t_ms: number;
  pressed: boolean;
}

/** One stroke-log object, exactly as the service consumes it. */
export interface StrokePayload {
  stroke_id: string;
  mode: StrokeMode;
  radius_px: number;
  canvas: {
    origin: Vec3;
    u_axis: Vec3;
    v_axis: Vec3;
    width_mm: number;
    height_mm: number;
    axis: SliceAxis;
    index: number;
    pixel_dims: [number, number];
  };
  samples: StrokeSample[];
}

export interface SessionInfo {
  session_id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
}

export interface StrokeResult {
  changed_count: number;
  slice: [SliceAxis, number] | null;
}

export interface MeshData {
  vertexCount: number;
  triangleCount: number;
  /** xyz positions in mm, length vertexCount * 3 */
  positions: Float32Array;
  /** triangle vertex indices, length triangleCount * 3 */
  indices: Uint32Array;
}

export interface JobEvent {
  job_id: string;
  kind: "progress" | "done" | "cancelled";
  payload: Record<string, number>;
}
