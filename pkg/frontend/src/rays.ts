/** Pointer-to-ray adapter.
 *
 * The browser has no 6-DoF stylus, so each 2D slice-view point becomes a
 * ray perpendicular to the session canvas, hovering above that pixel's
 * physical position and pointing at the front face. The server runs the
 * same projection math it uses for tracked styluses.
 */

import type { CanvasPose, StrokeSample, Vec3 } from "./types.js";

const HOVER_MM = 10;

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function canvasNormal(pose: CanvasPose): Vec3 {
  return cross(pose.uAxis, pose.vAxis);
}

/** Map a pixel coordinate on the slice view to a perpendicular ray sample. */
export function pointerToRaySample(
  pose: CanvasPose,
  px: number,
  py: number,
  tMs: number,
  pressed = true,
): StrokeSample {
  const [pw, ph] = pose.pixelDims;
  const n = canvasNormal(pose);
  const u = (px / pw) * pose.widthMm;
  const v = (py / ph) * pose.heightMm;
  const tip: Vec3 = [
    pose.origin[0] + u * pose.uAxis[0] + v * pose.vAxis[0] + HOVER_MM * n[0],
    pose.origin[1] + u * pose.uAxis[1] + v * pose.vAxis[1] + HOVER_MM * n[1],
    pose.origin[2] + u * pose.uAxis[2] + v * pose.vAxis[2] + HOVER_MM * n[2],
  ];
  return {
    tip,
    direction: [-n[0], -n[1], -n[2]],
    t_ms: tMs,
    pressed,
  };
}

/** Default axial pose matching the server's session canvas. */
export function defaultPose(
  dims: [number, number, number],
  spacing: [number, number, number],
  index = 0,
): CanvasPose {
  const [nx, ny] = dims;
  const [sx, sy] = spacing;
  return {
    origin: [0, 0, 0],
    uAxis: [1, 0, 0],
    vAxis: [0, 1, 0],
    widthMm: nx * sx,
    heightMm: ny * sy,
    axis: "axial",
    index,
    pixelDims: [nx, ny],
  };
}
