/**
 * Interactive editing studio: draw a hole over the base image, pick
 * exemplars from the gallery, move the crossover and truncation
 * sliders, and iterate on inpainting results.
 */

import { ServiceClient } from "../api.js";
import { heatToRgba } from "../diff.js";
import type { HistoryEntry } from "../session.js";
import { EditSession } from "../session.js";
import type { RgbImage, StrokePoint } from "../types.js";
import { canvasCodec, decodeAsync } from "./canvasCodec.js";

const SCALE = 6; // display zoom for small model resolutions

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

function drawImage(canvas: HTMLCanvasElement, image: RgbImage): void {
  canvas.width = image.width * SCALE;
  canvas.height = image.height * SCALE;
  const ctx = canvas.getContext("2d")!;
  const off = document.createElement("canvas");
  off.width = image.width;
  off.height = image.height;
  off.getContext("2d")!.putImageData(new ImageData(new Uint8ClampedArray(image.data), image.width, image.height), 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const client = new ServiceClient(params.get("service") ?? "");
  if (!(await client.health())) {
    el<HTMLDivElement>("status").textContent = "service unreachable";
    return;
  }
  const info = await client.model();
  el<HTMLDivElement>("status").textContent =
    `model ${info.checkpoint_hash.slice(0, 12)} @ ${info.resolution}px, L=${info.num_style_layers}`;

  const gallery = await client.exemplars();
  const galleryImages = new Map<string, RgbImage>();
  for (const item of gallery) {
    galleryImages.set(item.id, await decodeAsync(item.image_b64));
  }
  if (gallery.length === 0) {
    el<HTMLDivElement>("status").textContent += " (no gallery; upload images)";
  }

  let session = new EditSession(
    galleryImages.get(gallery[0]?.id) ?? blank(info.resolution),
    client,
    canvasCodec,
  );
  session.exemplar = galleryImages.get(gallery[1]?.id ?? gallery[0]?.id) ?? null;

  const baseCanvas = el<HTMLCanvasElement>("canvas");
  const maskCanvas = el<HTMLCanvasElement>("mask-overlay");
  const radiusInput = el<HTMLInputElement>("radius");
  const psiInput = el<HTMLInputElement>("psi");
  const seedInput = el<HTMLInputElement>("seed");
  const crossFrom = el<HTMLInputElement>("cross-from");
  const crossTo = el<HTMLInputElement>("cross-to");
  crossFrom.max = crossTo.max = String(info.num_style_layers);
  crossTo.value = String(info.num_style_layers);

  function blank(size: number): RgbImage {
    return { width: size, height: size, data: new Uint8ClampedArray(size * size * 4).fill(128) };
  }

  function redraw(): void {
    drawImage(baseCanvas, session.base);
    const mask = session.currentMask();
    maskCanvas.width = baseCanvas.width;
    maskCanvas.height = baseCanvas.height;
    const ctx = maskCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, maskCanvas.width, maskCanvas.height);
    ctx.fillStyle = "rgba(255, 60, 60, 0.45)";
    for (let y = 0; y < mask.height; y++) {
      for (let x = 0; x < mask.width; x++) {
        if (mask.data[y * mask.width + x]) {
          ctx.fillRect(x * SCALE, y * SCALE, SCALE, SCALE);
        }
      }
    }
  }

  function renderGallery(): void {
    const strip = el<HTMLDivElement>("gallery");
    strip.innerHTML = "";
    for (const item of gallery) {
      const img = galleryImages.get(item.id)!;
      const thumb = document.createElement("canvas");
      drawImage(thumb, img);
      thumb.className = "thumb";
      thumb.title = item.id;
      thumb.onclick = (ev) => {
        if (ev.shiftKey) {
          session.exemplar2 = img;
          session.settings.crossover = [Number(crossFrom.value), Number(crossTo.value)];
        } else {
          session.exemplar = img;
        }
        thumb.classList.toggle("selected");
      };
      strip.appendChild(thumb);
    }
  }

  function renderHistory(): void {
    const strip = el<HTMLDivElement>("history");
    strip.innerHTML = "";
    for (const entry of session.getHistory()) {
      const cell = document.createElement("div");
      cell.className = "history-cell";
      const thumb = document.createElement("canvas");
      drawImage(thumb, entry.image);
      const badge = document.createElement("span");
      badge.textContent = entry.badgeGreen ? "✓ preserved" : "✗ modified";
      badge.className = entry.badgeGreen ? "badge ok" : "badge bad";
      cell.append(thumb, badge);
      cell.onclick = () => showCompare(entry);
      strip.appendChild(cell);
    }
  }

  function showCompare(entry: HistoryEntry): void {
    const overlay = session.compareWithBase(entry.id);
    const view = el<HTMLCanvasElement>("compare");
    drawImage(view, entry.image);
    const ctx = view.getContext("2d")!;
    const heat = heatToRgba(overlay);
    const off = document.createElement("canvas");
    off.width = overlay.width;
    off.height = overlay.height;
    off.getContext("2d")!.putImageData(
      new ImageData(new Uint8ClampedArray(heat), overlay.width, overlay.height), 0, 0,
    );
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(off, 0, 0, view.width, view.height);
  }

  let drawing: StrokePoint[] | null = null;
  maskCanvas.addEventListener("pointerdown", (ev) => {
    drawing = [{ x: ev.offsetX / SCALE, y: ev.offsetY / SCALE }];
  });
  maskCanvas.addEventListener("pointermove", (ev) => {
    if (!drawing) return;
    drawing.push({ x: ev.offsetX / SCALE, y: ev.offsetY / SCALE });
  });
  maskCanvas.addEventListener("pointerup", () => {
    if (drawing) {
      session.addStroke({ points: drawing, radius: Number(radiusInput.value) });
      drawing = null;
      redraw();
    }
  });

  el<HTMLButtonElement>("undo").onclick = () => { session.undo(); redraw(); };
  el<HTMLButtonElement>("redo").onclick = () => { session.redo(); redraw(); };
  el<HTMLButtonElement>("inpaint").onclick = async () => {
    session.settings.psi = Number(psiInput.value);
    session.settings.seed = Number(seedInput.value);
    if (session.exemplar2) {
      session.settings.crossover = [Number(crossFrom.value), Number(crossTo.value)];
    }
    el<HTMLButtonElement>("inpaint").disabled = true;
    try {
      const entry = await session.requestInpaint();
      if (entry) renderHistory();
    } catch (err) {
      el<HTMLDivElement>("status").textContent = `request failed: ${err}`;
    } finally {
      el<HTMLButtonElement>("inpaint").disabled = false;
    }
  };
  el<HTMLButtonElement>("export").onclick = () => {
    const blob = new Blob([JSON.stringify(session.exportSession(), null, 2)],
                          { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session.json";
    a.click();
  };

  el<HTMLInputElement>("upload").onchange = async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const bytes = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    for (let i = 0; i < bytes.length; i += 0x8000) {
      binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
    }
    const image = await decodeAsync(btoa(binary));
    session = new EditSession(image, client, canvasCodec);
    session.exemplar = galleryImages.get(gallery[0]?.id) ?? null;
    session.settings.allowResize = el<HTMLInputElement>("allow-resize").checked;
    renderHistory();
    redraw();
  };
  el<HTMLInputElement>("allow-resize").onchange = (ev) => {
    session.settings.allowResize = (ev.target as HTMLInputElement).checked;
  };

  renderGallery();
  redraw();
}

boot().catch((err) => {
  el<HTMLDivElement>("status").textContent = `failed to start: ${err}`;
});
