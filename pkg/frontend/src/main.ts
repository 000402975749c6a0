/**
 * Canvas UI wiring: paint on a mask overlay above the source image, trigger
 * translations, and show the source / mask / output triptych.
 */

import { StudioApi } from "./core/api.js";
import { StrokePoint } from "./core/maskLayer.js";
import { PRESETS, Studio } from "./core/studio.js";

const params = new URLSearchParams(window.location.search);
const serviceUrl = params.get("service") ?? "http://127.0.0.1:8787";

const studio = new Studio(new StudioApi(serviceUrl));

const sourceCanvas = document.getElementById("source") as HTMLCanvasElement;
const paintCanvas = document.getElementById("paint") as HTMLCanvasElement;
const resultCanvas = document.getElementById("result") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const status = document.getElementById("status") as HTMLSpanElement;
const staleBadge = document.getElementById("stale") as HTMLSpanElement;
const fileInput = document.getElementById("file") as HTMLInputElement;
const directionSelect = document.getElementById("direction") as HTMLSelectElement;
const brushSize = document.getElementById("brush-size") as HTMLInputElement;
const modeButton = document.getElementById("mode") as HTMLButtonElement;
const presetBar = document.getElementById("presets") as HTMLDivElement;

const DISPLAY = 384; // on-screen size; the mask grid itself stays at model resolution

function canvasPoint(event: PointerEvent): StrokePoint {
  const rect = paintCanvas.getBoundingClientRect();
  const scale = studio.resolution / rect.width;
  return { x: (event.clientX - rect.left) * scale, y: (event.clientY - rect.top) * scale };
}

let stroke: StrokePoint[] = [];

paintCanvas.addEventListener("pointerdown", (event) => {
  if (!studio.connected) return;
  paintCanvas.setPointerCapture(event.pointerId);
  stroke = [canvasPoint(event)];
  studio.paint(stroke);
});
paintCanvas.addEventListener("pointermove", (event) => {
  if (stroke.length === 0) return;
  stroke.push(canvasPoint(event));
  // re-rasterize the whole stroke on top of the undo entry pushed at pointerdown
  studio.undo();
  studio.paint(stroke);
});
paintCanvas.addEventListener("pointerup", () => {
  stroke = [];
});

document.getElementById("undo")!.addEventListener("click", () => studio.undo());
document.getElementById("redo")!.addEventListener("click", () => studio.redo());
document.getElementById("clear")!.addEventListener("click", () => studio.mask.fill(0));
document.getElementById("run")!.addEventListener("click", () => void studio.runTranslation());

modeButton.addEventListener("click", () => {
  const mode = studio.brush.mode === "paint" ? "erase" : "paint";
  studio.setBrush({ mode });
  modeButton.textContent = mode;
});
brushSize.addEventListener("input", () => studio.setBrush({ size: Number(brushSize.value) }));
directionSelect.addEventListener("change", () => {
  studio.setDirection(directionSelect.value as "a2b" | "b2a");
});

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  const image = await createImageBitmap(file);
  // normalize the source to the model resolution so image and mask always match
  const off = document.createElement("canvas");
  off.width = off.height = studio.resolution;
  const ctx = off.getContext("2d")!;
  ctx.drawImage(image, 0, 0, studio.resolution, studio.resolution);
  const blob: Blob = await new Promise((resolve) => off.toBlob((b) => resolve(b!), "image/png"));
  studio.setSource(new Uint8Array(await blob.arrayBuffer()));
  drawPngTo(sourceCanvas, studio.sourcePng!);
});

for (const preset of PRESETS) {
  const button = document.createElement("button");
  button.textContent = preset.label;
  button.addEventListener("click", () => void studio.loadPreset({
    ...preset,
    seed: Math.floor(Math.random() * 2 ** 31),
  }));
  presetBar.appendChild(button);
}

function drawPngTo(canvas: HTMLCanvasElement, png: Uint8Array): void {
  const blob = new Blob([png as BlobPart], { type: "image/png" });
  const url = URL.createObjectURL(blob);
  const img = new Image();
  img.onload = () => {
    const ctx = canvas.getContext("2d")!;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    URL.revokeObjectURL(url);
  };
  img.src = url;
}

function renderMaskOverlay(): void {
  if (!studio.connected) return;
  const ctx = paintCanvas.getContext("2d")!;
  const res = studio.resolution;
  const cell = paintCanvas.width / res;
  ctx.clearRect(0, 0, paintCanvas.width, paintCanvas.height);
  const bits = studio.mask.view();
  ctx.fillStyle = "rgba(64, 200, 255, 0.45)"; // masked region tint
  for (let y = 0; y < res; y++) {
    for (let x = 0; x < res; x++) {
      if (bits[y * res + x]) ctx.fillRect(x * cell, y * cell, cell, cell);
    }
  }
}

studio.subscribe(() => {
  banner.textContent = studio.error ?? "";
  banner.style.display = studio.error ? "block" : "none";
  staleBadge.style.display = studio.resultStale ? "inline" : "none";
  status.textContent = studio.busy
    ? "translating…"
    : studio.lastResult
      ? `${studio.lastResult.latencyMs.toFixed(0)} ms`
      : "";
  renderMaskOverlay();
  if (studio.lastResult) drawPngTo(resultCanvas, studio.lastResult.pngBytes);
});

async function boot(): Promise<void> {
  try {
    await studio.connect();
  } catch (exc) {
    banner.textContent = `cannot reach service at ${serviceUrl}: ${exc}`;
    banner.style.display = "block";
    return;
  }
  for (const canvas of [sourceCanvas, paintCanvas, resultCanvas]) {
    canvas.width = canvas.height = DISPLAY;
  }
  renderMaskOverlay();
}

void boot();
