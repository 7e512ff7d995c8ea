/**
 * Editing session state: the base image, vector mask strokes with
 * undo/redo, exemplar choices, style controls, and an append-only
 * history of inpaint results.
 *
 * The mask PNG sent to the service and the mask used for the
 * client-side preservation badge come from one rasterization call, so
 * the badge always describes exactly what the server saw.
 */

import type { ServiceClient } from "./api.js";
import { diffOverlay, diffSupportWithinMask, type DiffOverlay } from "./diff.js";
import { rasterizeStrokes } from "./strokes.js";
import type {
  BinaryMask,
  ImageCodec,
  InpaintRequestBody,
  RgbImage,
  Stroke,
} from "./types.js";

export interface HistoryEntry {
  readonly id: number;
  readonly request: InpaintRequestBody;
  readonly image: RgbImage;
  readonly imageB64: string;
  readonly mask: BinaryMask;
  readonly badgeGreen: boolean;
  readonly checkpointHash: string;
  readonly latencyMs: number;
}

export interface SessionSettings {
  phi?: string;
  crossover?: [number, number];
  psi: number;
  seed: number;
  /** Opt out of strict resolution checking for uploaded images. */
  allowResize?: boolean;
}

export interface SessionExport {
  strokes: Stroke[];
  settings: SessionSettings;
  resultIds: number[];
}

export class EditSession {
  readonly base: RgbImage;
  exemplar: RgbImage | null = null;
  exemplar2: RgbImage | null = null;
  settings: SessionSettings = { psi: 1.0, seed: 0 };

  private strokes: Stroke[] = [];
  private redoStack: Stroke[] = [];
  private history: HistoryEntry[] = [];
  private requestCounter = 0;
  private latestIssued = 0;

  constructor(
    base: RgbImage,
    private readonly client: ServiceClient,
    private readonly codec: ImageCodec,
  ) {
    this.base = base;
  }

  // --- mask editing ---------------------------------------------------

  addStroke(stroke: Stroke): void {
    this.strokes.push({ points: stroke.points.map((p) => ({ ...p })), radius: stroke.radius });
    this.redoStack = [];
  }

  undo(): boolean {
    const s = this.strokes.pop();
    if (!s) return false;
    this.redoStack.push(s);
    return true;
  }

  redo(): boolean {
    const s = this.redoStack.pop();
    if (!s) return false;
    this.strokes.push(s);
    return true;
  }

  getStrokes(): readonly Stroke[] {
    return this.strokes;
  }

  /** Single rasterization source for both the request and the badge. */
  currentMask(): BinaryMask {
    return rasterizeStrokes(this.strokes, this.base.width, this.base.height);
  }

  // --- inpainting -----------------------------------------------------

  buildRequest(mask: BinaryMask): InpaintRequestBody {
    if (!this.exemplar) throw new Error("no exemplar selected");
    const body: InpaintRequestBody = {
      image_b64: this.codec.encode(this.base),
      mask_b64: this.codec.encodeMask(mask),
      exemplar_b64: this.codec.encode(this.exemplar),
      psi: this.settings.psi,
      seed: this.settings.seed,
    };
    if (this.settings.phi) body.phi = this.settings.phi;
    if (this.settings.allowResize) body.allow_resize = true;
    if (this.exemplar2 && this.settings.crossover) {
      body.exemplar2_b64 = this.codec.encode(this.exemplar2);
      body.crossover = this.settings.crossover;
    }
    return body;
  }

  /**
   * Issue an inpaint request from the current state. Resolves with the
   * appended history entry, or null when a newer request superseded
   * this one before its response arrived.
   */
  async requestInpaint(): Promise<HistoryEntry | null> {
    const mask = this.currentMask();
    const request = this.buildRequest(mask);
    const id = ++this.requestCounter;
    this.latestIssued = id;
    const response = await this.client.inpaint(request);
    if (this.latestIssued !== id) {
      return null; // superseded while in flight
    }
    const image = this.codec.decode(response.image_b64);
    const entry: HistoryEntry = Object.freeze({
      id,
      request,
      image,
      imageB64: response.image_b64,
      mask,
      badgeGreen: diffSupportWithinMask(this.base, image, mask),
      checkpointHash: response.checkpoint_hash,
      latencyMs: response.latency_ms,
    });
    this.history.push(entry);
    return entry;
  }

  getHistory(): readonly HistoryEntry[] {
    return this.history.slice();
  }

  getEntry(id: number): HistoryEntry {
    const entry = this.history.find((e) => e.id === id);
    if (!entry) throw new Error(`no history entry ${id}`);
    return entry;
  }

  // --- comparisons ------------------------------------------------------

  /** Heat overlay between two results, restricted to their mask union. */
  compare(idA: number, idB: number): DiffOverlay {
    const a = this.getEntry(idA);
    const b = this.getEntry(idB);
    const data = new Uint8Array(a.mask.data.length);
    for (let i = 0; i < data.length; i++) {
      data[i] = a.mask.data[i] | b.mask.data[i];
    }
    return diffOverlay(a.image, b.image, { width: a.mask.width, height: a.mask.height, data });
  }

  /** Heat overlay between the base image and one result. */
  compareWithBase(id: number): DiffOverlay {
    const entry = this.getEntry(id);
    return diffOverlay(this.base, entry.image, entry.mask);
  }

  // --- export -----------------------------------------------------------

  exportSession(): SessionExport {
    return {
      strokes: this.strokes.map((s) => ({ points: s.points.map((p) => ({ ...p })), radius: s.radius })),
      settings: { ...this.settings },
      resultIds: this.history.map((e) => e.id),
    };
  }
}
