/** Shared data shapes for the editing studio. */

export interface RgbImage {
  width: number;
  height: number;
  /** RGBA, row-major, 4 bytes per pixel. */
  data: Uint8ClampedArray;
}

export interface StrokePoint {
  x: number;
  y: number;
}

export interface Stroke {
  points: StrokePoint[];
  radius: number;
}

/** Row-major h*w bytes, 1 = hole. */
export interface BinaryMask {
  width: number;
  height: number;
  data: Uint8Array;
}

export interface InpaintRequestBody {
  image_b64: string;
  mask_b64: string;
  exemplar_b64: string;
  exemplar2_b64?: string;
  crossover?: [number, number];
  phi?: string;
  psi?: number;
  seed?: number;
  allow_resize?: boolean;
}

export interface MixRequestBody {
  image_b64: string;
  mask_b64: string;
  exemplar1_b64: string;
  exemplar2_b64: string;
  i: number;
  j: number;
  psi?: number;
  seed?: number;
}

export interface InpaintResponseBody {
  image_b64: string;
  request: { seed: number; psi: number; phi: string };
  checkpoint_hash: string;
  latency_ms: number;
}

export interface ModelInfo {
  checkpoint_hash: string;
  params_hash?: string;
  resolution: number;
  num_style_layers: number;
  phi_default: string;
}

export interface ExemplarItem {
  id: string;
  image_b64: string;
}

/** Encode/decode images for the wire; canvas-based in the browser,
 * zlib-based PNG codec in node tests. */
export interface ImageCodec {
  encode(image: RgbImage): string;
  decode(b64: string): RgbImage;
  encodeMask(mask: BinaryMask): string;
}
