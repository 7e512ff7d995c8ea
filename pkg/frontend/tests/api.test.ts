import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient, ServiceError } from "../src/api.js";
import { nodePngCodec } from "../src/png.js";
import { emptyMask } from "../src/strokes.js";
import type { RgbImage } from "../src/types.js";
import { MockInpaintServer } from "../mock/server.js";

let server: MockInpaintServer;
let client: ServiceClient;

function flat(size: number, v: number): RgbImage {
  const data = new Uint8ClampedArray(size * size * 4).fill(v);
  for (let i = 3; i < data.length; i += 4) data[i] = 255;
  return { width: size, height: size, data };
}

beforeAll(async () => {
  server = new MockInpaintServer({ resolution: 16, numStyleLayers: 6 });
  await server.start();
  client = new ServiceClient(server.baseUrl);
});

afterAll(async () => {
  await server.stop();
});

describe("service client", () => {
  it("health and model info", async () => {
    expect(await client.health()).toBe(true);
    const info = await client.model();
    expect(info.resolution).toBe(16);
    expect(info.num_style_layers).toBe(6);
    expect(info.checkpoint_hash.length).toBeGreaterThan(0);
  });

  it("exemplars gallery decodes to images at model resolution", async () => {
    const items = await client.exemplars();
    expect(items.length).toBeGreaterThan(0);
    const img = nodePngCodec.decode(items[0].image_b64);
    expect(img.width).toBe(16);
  });

  it("surfaces field-level 400 errors", async () => {
    await expect(
      client.inpaint({ image_b64: "", mask_b64: "", exemplar_b64: "" } as never),
    ).rejects.toSatisfy((e: unknown) => e instanceof ServiceError && (e as ServiceError).status === 400);
  });

  it("surfaces 422 on resolution mismatch", async () => {
    const wrong = flat(8, 0);
    const mask = emptyMask(8, 8);
    try {
      await client.inpaint({
        image_b64: nodePngCodec.encode(wrong),
        mask_b64: nodePngCodec.encodeMask(mask),
        exemplar_b64: nodePngCodec.encode(wrong),
      });
      expect.unreachable();
    } catch (e) {
      expect((e as ServiceError).status).toBe(422);
    }
  });

  it("mix endpoint responds with the standard response shape", async () => {
    const img = flat(16, 128);
    const mask = emptyMask(16, 16);
    const res = await client.mix({
      image_b64: nodePngCodec.encode(img),
      mask_b64: nodePngCodec.encodeMask(mask),
      exemplar1_b64: nodePngCodec.encode(flat(16, 10)),
      exemplar2_b64: nodePngCodec.encode(flat(16, 240)),
      i: 2,
      j: 4,
      seed: 3,
    });
    expect(res.checkpoint_hash.length).toBeGreaterThan(0);
    expect(res.request.seed).toBe(3);
    const out = nodePngCodec.decode(res.image_b64);
    expect(Array.from(out.data)).toEqual(Array.from(img.data)); // empty mask
  });
});
