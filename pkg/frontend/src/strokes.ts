/**
 * Vector brush strokes and their deterministic rasterization.
 *
 * The rasterizer must agree bit-for-bit with the backend's disc
 * rendering (see the shared fixture test): a pixel's integer center is
 * masked when it lies within the stroke radius of any polyline
 * segment, single points counting as discs. All arithmetic is IEEE
 * float64 in the same order on both sides.
 */

import type { BinaryMask, Stroke } from "./types.js";

function capsuleHit(
  px: number, py: number,
  x0: number, y0: number, x1: number, y1: number,
  r: number,
): boolean {
  const vx = x1 - x0;
  const vy = y1 - y0;
  const wx = px - x0;
  const wy = py - y0;
  const c2 = vx * vx + vy * vy;
  let t = 0.0;
  if (c2 > 0.0) {
    t = (vx * wx + vy * wy) / c2;
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
  }
  const dx = wx - t * vx;
  const dy = wy - t * vy;
  return dx * dx + dy * dy <= r * r;
}

function stampCapsule(
  mask: BinaryMask,
  x0: number, y0: number, x1: number, y1: number,
  radius: number,
): void {
  const loX = Math.max(0, Math.floor(Math.min(x0, x1) - radius));
  const hiX = Math.min(mask.width - 1, Math.ceil(Math.max(x0, x1) + radius));
  const loY = Math.max(0, Math.floor(Math.min(y0, y1) - radius));
  const hiY = Math.min(mask.height - 1, Math.ceil(Math.max(y0, y1) + radius));
  for (let py = loY; py <= hiY; py++) {
    for (let px = loX; px <= hiX; px++) {
      if (capsuleHit(px, py, x0, y0, x1, y1, radius)) {
        mask.data[py * mask.width + px] = 1;
      }
    }
  }
}

export function emptyMask(width: number, height: number): BinaryMask {
  return { width, height, data: new Uint8Array(width * height) };
}

export function rasterizeStrokes(strokes: readonly Stroke[], width: number, height: number): BinaryMask {
  const mask = emptyMask(width, height);
  for (const stroke of strokes) {
    const pts = stroke.points;
    if (pts.length === 0) continue;
    if (pts.length === 1) {
      stampCapsule(mask, pts[0].x, pts[0].y, pts[0].x, pts[0].y, stroke.radius);
    }
    for (let k = 0; k + 1 < pts.length; k++) {
      stampCapsule(mask, pts[k].x, pts[k].y, pts[k + 1].x, pts[k + 1].y, stroke.radius);
    }
  }
  return mask;
}

export function maskedRatio(mask: BinaryMask): number {
  let on = 0;
  for (const v of mask.data) on += v;
  return on / mask.data.length;
}

export function masksEqual(a: BinaryMask, b: BinaryMask): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}
