/**
 * Studio round-trip checks against the documented service contract,
 * exercised over real HTTP against the mock server (set
 * STUDIO_SERVICE_URL to point them at a live service instead).
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { diffSupportWithinMask } from "../src/diff.js";
import { nodePngCodec } from "../src/png.js";
import { EditSession } from "../src/session.js";
import type { RgbImage, Stroke } from "../src/types.js";
import { MockInpaintServer } from "../mock/server.js";

let server: MockInpaintServer | null = null;
let client: ServiceClient;
let resolution: number;
let numLayers: number;

beforeAll(async () => {
  const external = process.env.STUDIO_SERVICE_URL;
  if (external) {
    client = new ServiceClient(external);
  } else {
    server = new MockInpaintServer({ resolution: 16, numStyleLayers: 6 });
    await server.start();
    client = new ServiceClient(server.baseUrl);
  }
  const info = await client.model();
  resolution = info.resolution;
  numLayers = info.num_style_layers;
});

afterAll(async () => {
  if (server) await server.stop();
});

function gradientImage(size: number, tint: number): RgbImage {
  const data = new Uint8ClampedArray(size * size * 4);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = (y * size + x) * 4;
      data[i] = (x * 255) / size;
      data[i + 1] = (y * 255) / size;
      data[i + 2] = tint;
      data[i + 3] = 255;
    }
  }
  return { width: size, height: size, data };
}

function strokeFor(size: number): Stroke {
  return {
    points: [
      { x: size * 0.25, y: size * 0.3 },
      { x: size * 0.7, y: size * 0.6 },
    ],
    radius: size * 0.15,
  };
}

describe("studio acceptance", () => {
  it("empty-mask request returns the base image", async () => {
    const session = new EditSession(gradientImage(resolution, 30), client, nodePngCodec);
    session.exemplar = gradientImage(resolution, 200);
    const entry = await session.requestInpaint();
    expect(entry).not.toBeNull();
    expect(Array.from(entry!.image.data)).toEqual(Array.from(session.base.data));
    expect(entry!.badgeGreen).toBe(true);
  });

  it("diff overlay support is inside the mask for every history pair", async () => {
    const session = new EditSession(gradientImage(resolution, 30), client, nodePngCodec);
    session.exemplar = gradientImage(resolution, 200);
    session.addStroke(strokeFor(resolution));
    for (const seed of [0, 1, 2]) {
      session.settings.seed = seed;
      const entry = await session.requestInpaint();
      expect(entry).not.toBeNull();
    }
    const history = session.getHistory();
    expect(history.length).toBe(3);
    for (const entry of history) {
      // base vs result: support within that entry's mask
      expect(diffSupportWithinMask(session.base, entry.image, entry.mask)).toBe(true);
    }
    for (let a = 0; a < history.length; a++) {
      for (let b = a + 1; b < history.length; b++) {
        const overlay = session.compare(history[a].id, history[b].id);
        // every out-of-mask pixel must have zero heat and equal pixels
        expect(
          diffSupportWithinMask(history[a].image, history[b].image, history[a].mask),
        ).toBe(true);
        expect(overlay.heat.length).toBe(resolution * resolution);
      }
    }
  });

  it("crossover slider at (1, L) equals a single-exemplar request", async () => {
    const base = gradientImage(resolution, 30);
    const exe1 = gradientImage(resolution, 100);
    const exe2 = gradientImage(resolution, 220);

    const viaMix = new EditSession(base, client, nodePngCodec);
    viaMix.exemplar = exe1;
    viaMix.exemplar2 = exe2;
    viaMix.settings.crossover = [1, numLayers];
    viaMix.settings.seed = 5;
    viaMix.addStroke(strokeFor(resolution));
    const mixed = await viaMix.requestInpaint();

    const viaSingle = new EditSession(base, client, nodePngCodec);
    viaSingle.exemplar = exe2;
    viaSingle.settings.seed = 5;
    viaSingle.addStroke(strokeFor(resolution));
    const single = await viaSingle.requestInpaint();

    expect(mixed!.imageB64).toBe(single!.imageB64);
  });
});
