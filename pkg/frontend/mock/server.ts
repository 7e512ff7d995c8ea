/**
 * In-process mock of the inference service for client tests.
 *
 * Honors the documented contract: unmasked pixels are returned
 * verbatim, responses are deterministic in the request (seed
 * included), resolution mismatches give 422, malformed bodies 400,
 * and a full-range crossover behaves exactly like inpainting with the
 * second exemplar alone.
 */

import { createHash } from "node:crypto";
import * as http from "node:http";

import { nodePngCodec } from "../src/png.js";
import type { RgbImage } from "../src/types.js";

const CHECKPOINT_HASH = "mock-checkpoint-0001";

interface MockOptions {
  resolution: number;
  numStyleLayers: number;
}

function sha(bytes: Uint8Array | string): string {
  return createHash("sha256").update(bytes).digest("hex");
}

/** Deterministic byte stream from a string key (xorshift32). */
function* byteStream(key: string): Generator<number> {
  let state = parseInt(sha(key).slice(0, 8), 16) || 1;
  for (;;) {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5;
    state >>>= 0;
    yield state & 0xff;
  }
}

export class MockInpaintServer {
  private server: http.Server;
  port = 0;

  constructor(private readonly opts: MockOptions) {
    this.server = http.createServer((req, res) => this.route(req, res));
  }

  start(): Promise<number> {
    return new Promise((resolve) => {
      this.server.listen(0, "127.0.0.1", () => {
        this.port = (this.server.address() as { port: number }).port;
        resolve(this.port);
      });
    });
  }

  stop(): Promise<void> {
    return new Promise((resolve) => this.server.close(() => resolve()));
  }

  get baseUrl(): string {
    return `http://127.0.0.1:${this.port}`;
  }

  private route(req: http.IncomingMessage, res: http.ServerResponse): void {
    const send = (status: number, body: unknown) => {
      res.writeHead(status, { "content-type": "application/json" });
      res.end(JSON.stringify(body));
    };
    if (req.method === "GET" && req.url === "/health") {
      return send(200, { status: "ok" });
    }
    if (req.method === "GET" && req.url === "/model") {
      return send(200, {
        checkpoint_hash: CHECKPOINT_HASH,
        resolution: this.opts.resolution,
        num_style_layers: this.opts.numStyleLayers,
        phi_default: "0000" + "1".repeat(Math.max(0, this.opts.numStyleLayers - 4)),
      });
    }
    if (req.method === "GET" && req.url === "/exemplars") {
      return send(200, { items: this.gallery() });
    }
    if (req.method === "POST" && (req.url === "/inpaint" || req.url === "/mix")) {
      let raw = "";
      req.on("data", (c) => (raw += c));
      req.on("end", () => {
        try {
          const body = JSON.parse(raw);
          const reply = req.url === "/mix" ? this.handleMix(body) : this.handleInpaint(body);
          send(reply.status, reply.body);
        } catch {
          send(400, { errors: [{ field: "", message: "malformed JSON body" }] });
        }
      });
      return;
    }
    send(404, { error: "not found" });
  }

  private gallery() {
    const items = [];
    for (let g = 0; g < 4; g++) {
      const img: RgbImage = {
        width: this.opts.resolution,
        height: this.opts.resolution,
        data: new Uint8ClampedArray(this.opts.resolution ** 2 * 4),
      };
      const stream = byteStream(`gallery-${g}`);
      for (let i = 0; i < img.data.length; i += 4) {
        img.data[i] = stream.next().value;
        img.data[i + 1] = stream.next().value;
        img.data[i + 2] = stream.next().value;
        img.data[i + 3] = 255;
      }
      items.push({ id: `exemplar-${g}.png`, image_b64: nodePngCodec.encode(img) });
    }
    return items;
  }

  private handleInpaint(body: Record<string, unknown>) {
    const missing = ["image_b64", "mask_b64", "exemplar_b64"].filter((f) => !(f in body));
    if (missing.length) {
      return {
        status: 400,
        body: { errors: missing.map((f) => ({ field: `body.${f}`, message: "Field required" })) },
      };
    }
    const layerSources: string[] = [];
    const exemplarHash = sha(String(body.exemplar_b64));
    for (let k = 0; k < this.opts.numStyleLayers; k++) layerSources.push(exemplarHash);
    if (body.exemplar2_b64 && Array.isArray(body.crossover)) {
      const [i, j] = body.crossover as [number, number];
      const second = sha(String(body.exemplar2_b64));
      for (let k = 0; k < this.opts.numStyleLayers; k++) {
        if (i <= k + 1 && k + 1 <= j) layerSources[k] = second;
      }
    }
    return this.synthesize(body, layerSources);
  }

  private handleMix(body: Record<string, unknown>) {
    const missing = ["image_b64", "mask_b64", "exemplar1_b64", "exemplar2_b64", "i", "j"]
      .filter((f) => !(f in body));
    if (missing.length) {
      return {
        status: 400,
        body: { errors: missing.map((f) => ({ field: `body.${f}`, message: "Field required" })) },
      };
    }
    const first = sha(String(body.exemplar1_b64));
    const second = sha(String(body.exemplar2_b64));
    const i = body.i as number;
    const j = body.j as number;
    const layerSources: string[] = [];
    for (let k = 0; k < this.opts.numStyleLayers; k++) {
      layerSources.push(i <= k + 1 && k + 1 <= j ? second : first);
    }
    return this.synthesize(body, layerSources);
  }

  private synthesize(body: Record<string, unknown>, layerSources: string[]) {
    let image: RgbImage;
    let mask: RgbImage;
    try {
      image = nodePngCodec.decode(String(body.image_b64));
      mask = nodePngCodec.decode(String(body.mask_b64));
    } catch {
      return { status: 400, body: { errors: [{ field: "body", message: "undecodable PNG" }] } };
    }
    const r = this.opts.resolution;
    if (image.width !== r || image.height !== r || mask.width !== r || mask.height !== r) {
      return { status: 422, body: { error: `expected ${r}x${r} inputs` } };
    }
    const seed = (body.seed as number) ?? 0;
    const psi = (body.psi as number) ?? 1.0;
    const phi = (body.phi as string) ?? "";
    const key = `${layerSources.join(",")}|${seed}|${psi}|${phi}`;
    const stream = byteStream(key);

    const out: RgbImage = {
      width: image.width,
      height: image.height,
      data: new Uint8ClampedArray(image.data),
    };
    for (let i = 0; i < r * r; i++) {
      const hole = mask.data[i * 4] > 127;
      const fill = [stream.next().value, stream.next().value, stream.next().value];
      if (hole) {
        out.data[i * 4] = fill[0];
        out.data[i * 4 + 1] = fill[1];
        out.data[i * 4 + 2] = fill[2];
      }
    }
    return {
      status: 200,
      body: {
        image_b64: nodePngCodec.encode(out),
        request: { seed, psi, phi },
        checkpoint_hash: CHECKPOINT_HASH,
        latency_ms: 1.0,
      },
    };
  }
}
