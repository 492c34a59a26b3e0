/** Camera-distance-driven level-of-detail selection for the 3D view.
 *
 * Mirrors the server ladder: level k applies from its threshold distance
 * upward; the highest threshold not exceeding the camera distance wins.
 */

export class LodPolicy {
  /** thresholds[k] is the minimum camera distance (mm) for level k. */
  constructor(readonly thresholds: number[] = [0, 500]) {
    if (thresholds.length === 0 || thresholds[0] !== 0) {
      throw new RangeError("level 0 must start at distance 0");
    }
    for (let i = 1; i < thresholds.length; i++) {
      if (thresholds[i] <= thresholds[i - 1]) {
        throw new RangeError("thresholds must strictly increase");
      }
    }
  }

  levelFor(distance: number): number {
    if (!Number.isFinite(distance) || distance < 0) {
      throw new RangeError(`camera distance must be >= 0, got ${distance}`);
    }
    let level = 0;
    for (let i = 0; i < this.thresholds.length; i++) {
      if (this.thresholds[i] <= distance) level = i;
    }
    return level;
  }

  /** True when a camera move crosses into a different level. */
  needsRefetch(previousDistance: number, distance: number): boolean {
    return this.levelFor(previousDistance) !== this.levelFor(distance);
  }
}
