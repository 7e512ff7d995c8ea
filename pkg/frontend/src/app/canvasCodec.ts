/** Browser image codec backed by canvas PNG encoding. */

import type { BinaryMask, ImageCodec, RgbImage } from "../types.js";

function toCanvas(image: RgbImage): HTMLCanvasElement {
  const canvas = document.createElement("canvas");
  canvas.width = image.width;
  canvas.height = image.height;
  const ctx = canvas.getContext("2d")!;
  ctx.putImageData(new ImageData(new Uint8ClampedArray(image.data), image.width, image.height), 0, 0);
  return canvas;
}

export const canvasCodec: ImageCodec = {
  encode(image: RgbImage): string {
    const url = toCanvas(image).toDataURL("image/png");
    return url.slice(url.indexOf(",") + 1);
  },

  decode(b64: string): RgbImage {
    // synchronous decode via an offscreen image is not possible; the app
    // pre-decodes asynchronously and passes RgbImage around instead.
    throw new Error("use decodeAsync in the browser");
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
    return canvasCodec.encode(img);
  },
};

export async function decodeAsync(b64: string): Promise<RgbImage> {
  const img = new Image();
  img.src = `data:image/png;base64,${b64}`;
  await img.decode();
  const canvas = document.createElement("canvas");
  canvas.width = img.naturalWidth;
  canvas.height = img.naturalHeight;
  const ctx = canvas.getContext("2d")!;
  ctx.drawImage(img, 0, 0);
  const data = ctx.getImageData(0, 0, canvas.width, canvas.height);
  return { width: canvas.width, height: canvas.height, data: data.data };
}
