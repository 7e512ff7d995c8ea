import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { nodePngCodec } from "../src/png.js";
import { EditSession } from "../src/session.js";
import { masksEqual, rasterizeStrokes } from "../src/strokes.js";
import type { RgbImage, Stroke } from "../src/types.js";
import { MockInpaintServer } from "../mock/server.js";

const RES = 16;

function checkered(size: number): RgbImage {
  const data = new Uint8ClampedArray(size * size * 4);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const v = (x + y) % 2 ? 200 : 40;
      const i = (y * size + x) * 4;
      data[i] = v;
      data[i + 1] = 255 - v;
      data[i + 2] = x * 10;
      data[i + 3] = 255;
    }
  }
  return { width: size, height: size, data };
}

let server: MockInpaintServer;
let client: ServiceClient;

beforeAll(async () => {
  server = new MockInpaintServer({ resolution: RES, numStyleLayers: 6 });
  await server.start();
  client = new ServiceClient(server.baseUrl);
});

afterAll(async () => {
  await server.stop();
});

function newSession(): EditSession {
  const s = new EditSession(checkered(RES), client, nodePngCodec);
  s.exemplar = checkered(RES);
  return s;
}

const STROKE: Stroke = { points: [{ x: 4, y: 4 }, { x: 11, y: 9 }], radius: 2.5 };

describe("mask editing", () => {
  it("starts with an empty mask", () => {
    const s = newSession();
    expect(s.currentMask().data.every((v) => v === 0)).toBe(true);
  });

  it("undo restores the previous mask, redo reapplies", () => {
    const s = newSession();
    const empty = s.currentMask();
    s.addStroke(STROKE);
    const withStroke = s.currentMask();
    expect(masksEqual(withStroke, empty)).toBe(false);

    expect(s.undo()).toBe(true);
    expect(masksEqual(s.currentMask(), empty)).toBe(true);
    expect(s.redo()).toBe(true);
    expect(masksEqual(s.currentMask(), withStroke)).toBe(true);
    expect(s.redo()).toBe(false);
  });

  it("a new stroke clears the redo stack", () => {
    const s = newSession();
    s.addStroke(STROKE);
    s.undo();
    s.addStroke({ points: [{ x: 1, y: 1 }], radius: 1 });
    expect(s.redo()).toBe(false);
  });

  it("rasterization equals the strokes module output", () => {
    const s = newSession();
    s.addStroke(STROKE);
    expect(masksEqual(s.currentMask(), rasterizeStrokes([STROKE], RES, RES))).toBe(true);
  });
});

describe("inpaint requests", () => {
  it("empty mask returns the base image with a green badge", async () => {
    const s = newSession();
    const entry = await s.requestInpaint();
    expect(entry).not.toBeNull();
    expect(Array.from(entry!.image.data)).toEqual(Array.from(s.base.data));
    expect(entry!.badgeGreen).toBe(true);
  });

  it("same state and seed give identical result images", async () => {
    const s = newSession();
    s.addStroke(STROKE);
    s.settings.seed = 9;
    const e1 = await s.requestInpaint();
    const e2 = await s.requestInpaint();
    expect(e1!.imageB64).toBe(e2!.imageB64);
  });

  it("appends history entries in order and keeps them immutable", async () => {
    const s = newSession();
    s.addStroke(STROKE);
    await s.requestInpaint();
    s.settings.seed = 1;
    await s.requestInpaint();
    const hist = s.getHistory();
    expect(hist.map((e) => e.id)).toEqual([1, 2]);
    expect(Object.isFrozen(hist[0])).toBe(true);
    expect(() => {
      (hist[0] as { id: number }).id = 99;
    }).toThrow();
  });

  it("badge stays green for masked requests (unmasked pixels preserved)", async () => {
    const s = newSession();
    s.addStroke(STROKE);
    const entry = await s.requestInpaint();
    expect(entry!.badgeGreen).toBe(true);
  });

  it("stale responses are discarded when superseded", async () => {
    const s = newSession();
    s.addStroke(STROKE);
    s.settings.seed = 1;
    const first = s.requestInpaint();
    s.settings.seed = 2;
    const second = s.requestInpaint();
    const [r1, r2] = await Promise.all([first, second]);
    expect(r1).toBeNull(); // superseded by the second request
    expect(r2).not.toBeNull();
    expect(s.getHistory().length).toBe(1);
  });

  it("throws without an exemplar", async () => {
    const s = new EditSession(checkered(RES), client, nodePngCodec);
    await expect(s.requestInpaint()).rejects.toThrow(/exemplar/);
  });
});

describe("session export", () => {
  it("exports strokes, settings and result ids as plain JSON", async () => {
    const s = newSession();
    s.addStroke(STROKE);
    s.settings.psi = 0.5;
    s.settings.seed = 3;
    await s.requestInpaint();
    const exported = s.exportSession();
    expect(exported.strokes.length).toBe(1);
    expect(exported.settings.psi).toBe(0.5);
    expect(exported.resultIds).toEqual([1]);
    expect(() => JSON.stringify(exported)).not.toThrow();
  });
});

describe("resize opt-in", () => {
  it("includes allow_resize only when enabled", () => {
    const s = newSession();
    expect("allow_resize" in s.buildRequest(s.currentMask())).toBe(false);
    s.settings.allowResize = true;
    expect(s.buildRequest(s.currentMask()).allow_resize).toBe(true);
  });
});
