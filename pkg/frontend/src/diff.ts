/** Pixel-diff heat overlays between result images, restricted to the mask. */

import type { BinaryMask, RgbImage } from "./types.js";

export interface DiffOverlay {
  width: number;
  height: number;
  /** Per-pixel summed absolute channel difference, 0 outside the mask. */
  heat: Uint16Array;
  maxHeat: number;
  changedPixels: number;
}

export function diffOverlay(a: RgbImage, b: RgbImage, mask: BinaryMask): DiffOverlay {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("images differ in size");
  }
  if (mask.width !== a.width || mask.height !== a.height) {
    throw new Error("mask does not match image size");
  }
  const heat = new Uint16Array(a.width * a.height);
  let maxHeat = 0;
  let changed = 0;
  for (let i = 0; i < heat.length; i++) {
    if (!mask.data[i]) continue;
    const d =
      Math.abs(a.data[i * 4] - b.data[i * 4]) +
      Math.abs(a.data[i * 4 + 1] - b.data[i * 4 + 1]) +
      Math.abs(a.data[i * 4 + 2] - b.data[i * 4 + 2]);
    heat[i] = d;
    if (d > 0) changed++;
    if (d > maxHeat) maxHeat = d;
  }
  return { width: a.width, height: a.height, heat, maxHeat, changedPixels: changed };
}

/** True when every differing pixel lies inside the mask. */
export function diffSupportWithinMask(a: RgbImage, b: RgbImage, mask: BinaryMask): boolean {
  for (let i = 0; i < mask.data.length; i++) {
    if (mask.data[i]) continue;
    for (let c = 0; c < 3; c++) {
      if (a.data[i * 4 + c] !== b.data[i * 4 + c]) return false;
    }
  }
  return true;
}

/** Render the heat as a translucent red RGBA layer for canvas display. */
export function heatToRgba(overlay: DiffOverlay): Uint8ClampedArray {
  const out = new Uint8ClampedArray(overlay.width * overlay.height * 4);
  const scale = overlay.maxHeat > 0 ? 255 / overlay.maxHeat : 0;
  for (let i = 0; i < overlay.heat.length; i++) {
    const v = overlay.heat[i] * scale;
    out[i * 4] = 255;
    out[i * 4 + 3] = v;
  }
  return out;
}
