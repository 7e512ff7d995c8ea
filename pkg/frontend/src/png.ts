/**
 * Minimal PNG codec for node-side tests and the mock server: 8-bit
 * grayscale / RGB / RGBA, no interlace, all five scanline filters on
 * decode, filter 0 on encode. Browsers use the canvas codec instead.
 */

import * as zlib from "node:zlib";
import { Buffer } from "node:buffer";

import type { BinaryMask, ImageCodec, RgbImage } from "./types.js";

const SIGNATURE = Uint8Array.from([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (const b of bytes) {
    c = CRC_TABLE[(c ^ b) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, body: Uint8Array): Uint8Array {
  const out = new Uint8Array(12 + body.length);
  const view = new DataView(out.buffer);
  view.setUint32(0, body.length);
  for (let i = 0; i < 4; i++) out[4 + i] = type.charCodeAt(i);
  out.set(body, 8);
  view.setUint32(8 + body.length, crc32(out.subarray(4, 8 + body.length)));
  return out;
}

export function encodePng(image: RgbImage, channels: 1 | 3 | 4 = 3): Uint8Array {
  const { width, height, data } = image;
  const colorType = channels === 1 ? 0 : channels === 3 ? 2 : 6;
  const ihdr = new Uint8Array(13);
  const view = new DataView(ihdr.buffer);
  view.setUint32(0, width);
  view.setUint32(4, height);
  ihdr[8] = 8;
  ihdr[9] = colorType;

  const stride = width * channels;
  const raw = new Uint8Array((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter: none
    for (let x = 0; x < width; x++) {
      const src = (y * width + x) * 4;
      const dst = y * (stride + 1) + 1 + x * channels;
      if (channels === 1) {
        raw[dst] = data[src];
      } else {
        raw[dst] = data[src];
        raw[dst + 1] = data[src + 1];
        raw[dst + 2] = data[src + 2];
        if (channels === 4) raw[dst + 3] = data[src + 3];
      }
    }
  }
  const idat = zlib.deflateSync(raw, { level: 6 });
  const parts = [
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", new Uint8Array(idat)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

export function decodePng(bytes: Uint8Array): RgbImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  let width = 0;
  let height = 0;
  let colorType = -1;
  const idats: Uint8Array[] = [];
  let off = 8;
  while (off < bytes.length) {
    const view = new DataView(bytes.buffer, bytes.byteOffset + off);
    const len = view.getUint32(0);
    const type = String.fromCharCode(bytes[off + 4], bytes[off + 5], bytes[off + 6], bytes[off + 7]);
    const body = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      const hv = new DataView(body.buffer, body.byteOffset);
      width = hv.getUint32(0);
      height = hv.getUint32(4);
      const bitDepth = body[8];
      colorType = body[9];
      if (bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (body[12] !== 0) throw new Error("interlaced PNG not supported");
      if (![0, 2, 6].includes(colorType)) throw new Error(`unsupported color type ${colorType}`);
    } else if (type === "IDAT") {
      idats.push(body);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len;
  }
  const channels = colorType === 0 ? 1 : colorType === 2 ? 3 : 4;
  const raw = new Uint8Array(zlib.inflateSync(Buffer.concat(idats.map((b) => Buffer.from(b)))));
  const stride = width * channels;
  const pixels = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const row = pixels.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? pixels.subarray((y - 1) * stride, y * stride) : null;
    for (let x = 0; x < stride; x++) {
      const a = x >= channels ? row[x - channels] : 0;
      const b = prev ? prev[x] : 0;
      const c = prev && x >= channels ? prev[x - channels] : 0;
      let v = line[x];
      switch (filter) {
        case 0: break;
        case 1: v = (v + a) & 0xff; break;
        case 2: v = (v + b) & 0xff; break;
        case 3: v = (v + Math.floor((a + b) / 2)) & 0xff; break;
        case 4: v = (v + paeth(a, b, c)) & 0xff; break;
        default: throw new Error(`unknown filter ${filter}`);
      }
      row[x] = v;
    }
  }
  const data = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < width * height; i++) {
    const s = i * channels;
    data[i * 4] = pixels[s];
    data[i * 4 + 1] = channels === 1 ? pixels[s] : pixels[s + 1];
    data[i * 4 + 2] = channels === 1 ? pixels[s] : pixels[s + 2];
    data[i * 4 + 3] = channels === 4 ? pixels[s + 3] : 255;
  }
  return { width, height, data };
}

/** Codec used by node tests and the mock server. */
export const nodePngCodec: ImageCodec = {
  encode(image: RgbImage): string {
    return Buffer.from(encodePng(image, 3)).toString("base64");
  },
  decode(b64: string): RgbImage {
    return decodePng(new Uint8Array(Buffer.from(b64, "base64")));
  },
  encodeMask(mask: BinaryMask): string {
    const img: RgbImage = {
      width: mask.width,
      height: mask.height,
      data: new Uint8ClampedArray(mask.width * mask.height * 4),
    };
    for (let i = 0; i < mask.data.length; i++) {
      const v = mask.data[i] ? 255 : 0;
      img.data[i * 4] = v;
      img.data[i * 4 + 1] = v;
      img.data[i * 4 + 2] = v;
      img.data[i * 4 + 3] = 255;
    }
    return Buffer.from(encodePng(img, 1)).toString("base64");
  },
};
