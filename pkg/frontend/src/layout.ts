/**
 * Workspace geometry: the world is measured in meters on the tabletop
 * plane, with the build grid in the left half (x < 0) and the supply
 * slots in the right half (x > 0), matching the session server's layout
 * defaults.  The canvas shows the whole workspace top-down.
 */

export const PITCH_M = 0.008;
export const BUILD_ORIGIN: readonly [number, number] = [-0.45, -0.15];

const WORLD_MIN_X = -0.6;
const WORLD_MIN_Y = -0.38;
const WORLD_MAX_X = 0.65;
const WORLD_MAX_Y = 0.38;
const SCALE = 800; // px per meter

export const CANVAS_WIDTH = Math.round((WORLD_MAX_X - WORLD_MIN_X) * SCALE);
export const CANVAS_HEIGHT = Math.round((WORLD_MAX_Y - WORLD_MIN_Y) * SCALE);

export interface CanvasPoint {
  x: number;
  y: number;
}

export function worldToCanvas(x: number, y: number): CanvasPoint {
  return { x: (x - WORLD_MIN_X) * SCALE, y: (y - WORLD_MIN_Y) * SCALE };
}

export function canvasToWorld(x: number, y: number): CanvasPoint {
  return { x: x / SCALE + WORLD_MIN_X, y: y / SCALE + WORLD_MIN_Y };
}

export function metersToPx(m: number): number {
  return m * SCALE;
}

/** Canvas x of the build/supply dividing line (world x = 0). */
export function dividerX(): number {
  return worldToCanvas(0, 0).x;
}

/**
 * Stud footprint of a part, in studs, read off its display name.
 *
 * Type names encode footprints as `<width>x<depth>` throughout the
 * system; anything else is treated as a single stud.
 */
export function footprintStuds(typeId: string): { w: number; d: number } {
  const m = /^(\d+)x(\d+)$/.exec(typeId);
  if (!m) return { w: 1, d: 1 };
  return { w: Number(m[1]), d: Number(m[2]) };
}

/** Footprint after an in-plane rotation (quarter turns swap the axes). */
export function rotatedFootprint(typeId: string, rotDeg: number): { w: number; d: number } {
  const { w, d } = footprintStuds(typeId);
  return rotDeg % 180 === 0 ? { w, d } : { w: d, d: w };
}

export interface Cell {
  x: number;
  y: number;
}

/**
 * Snap a world point to the build-grid cell whose placement center is
 * nearest, for a part of the given type and rotation.  Returns null for
 * non-snappable locations: outside the build half or off the grid.
 */
export function snapToCell(
  worldX: number,
  worldY: number,
  typeId: string,
  rotDeg: number,
): Cell | null {
  if (worldX >= 0) return null;
  const { w, d } = rotatedFootprint(typeId, rotDeg);
  // + 0 folds Math.round's negative zero into plain zero.
  const cx = Math.round((worldX - BUILD_ORIGIN[0]) / PITCH_M - w / 2) + 0;
  const cy = Math.round((worldY - BUILD_ORIGIN[1]) / PITCH_M - d / 2) + 0;
  if (cx < 0 || cy < 0 || cx > 63 || cy > 63) return null;
  return { x: cx, y: cy };
}

/** World center of a placement footprint; the inverse of snapToCell. */
export function cellCenter(cell: Cell, typeId: string, rotDeg: number): CanvasPoint {
  const { w, d } = rotatedFootprint(typeId, rotDeg);
  return {
    x: BUILD_ORIGIN[0] + (cell.x + w / 2) * PITCH_M,
    y: BUILD_ORIGIN[1] + (cell.y + d / 2) * PITCH_M,
  };
}

/** Half-extents in meters of a part lying flat at the given yaw. */
export function partExtents(typeId: string, yawRad: number): { ex: number; ey: number } {
  const { w, d } = footprintStuds(typeId);
  const quarter = Math.round(yawRad / (Math.PI / 2)) % 2 !== 0;
  const ex = ((quarter ? d : w) * PITCH_M) / 2;
  const ey = ((quarter ? w : d) * PITCH_M) / 2;
  return { ex, ey };
}
