/**
 * Studio state machine: source image, binary mask layer, translation runs.
 *
 * Mask editing never blocks on the network; at most one translation request
 * is in flight and a newer run cancels the older one. A result is "stale"
 * once the mask changes after it was produced.
 */

import { ServiceError, StudioApi, TranslateResult } from "./api.js";
import { Brush, MaskLayer, StrokePoint } from "./maskLayer.js";

export type Direction = "a2b" | "b2a";

export interface PresetSpec {
  label: string;
  scheme: Record<string, unknown>;
  seed?: number;
}

/** the scale presets plus the stochastic schemes */
export const PRESETS: PresetSpec[] = [
  { label: "square 0.5", scheme: { variant: "centered-square", scale: 0.5 } },
  { label: "square 0.8", scheme: { variant: "centered-square", scale: 0.8 } },
  { label: "square 1.0", scheme: { variant: "centered-square", scale: 1.0 } },
  { label: "multi-rectangles", scheme: { variant: "multi-rectangles" } },
  { label: "round 0.8", scheme: { variant: "round", scale: 0.8 } },
];

export interface ResultView {
  pngBytes: Uint8Array;
  latencyMs: number;
  maskRevision: number;
}

export class Studio {
  resolution = 0;
  mask!: MaskLayer;
  direction: Direction = "a2b";
  brush: Brush = { size: 6, mode: "paint" };
  sourcePng: Uint8Array | null = null;
  lastResult: ResultView | null = null;
  error: string | null = null;
  busy = false;

  private inflight: AbortController | null = null;
  private listeners = new Set<() => void>();

  constructor(readonly api: StudioApi) {}

  async connect(): Promise<void> {
    const info = await this.api.info();
    this.resolution = info.resolution;
    this.mask = new MaskLayer(info.resolution, info.resolution, 0);
    this.emit();
  }

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get connected(): boolean {
    return this.resolution > 0;
  }

  get resultStale(): boolean {
    return this.lastResult !== null && this.lastResult.maskRevision !== this.mask.revision;
  }

  setSource(png: Uint8Array): void {
    this.sourcePng = png;
    this.lastResult = null;
    this.error = null;
    this.emit();
  }

  setDirection(direction: Direction): void {
    this.direction = direction;
    this.emit();
  }

  setBrush(update: Partial<Brush>): void {
    this.brush = { ...this.brush, ...update };
    this.emit();
  }

  paint(path: StrokePoint[]): void {
    this.requireConnected();
    this.mask.paintStroke(path, this.brush);
    this.emit();
  }

  undo(): boolean {
    const changed = this.mask.undo();
    if (changed) this.emit();
    return changed;
  }

  redo(): boolean {
    const changed = this.mask.redo();
    if (changed) this.emit();
    return changed;
  }

  async loadPreset(preset: PresetSpec): Promise<void> {
    this.requireConnected();
    let png: Uint8Array;
    try {
      png = await this.api.sampleMask(preset.scheme, preset.seed ?? 0, this.resolution);
    } catch (exc) {
      // the mask layer stays untouched on any failure
      this.error = exc instanceof ServiceError ? exc.message : String(exc);
      this.emit();
      return;
    }
    const decoded = await MaskLayer.fromPngBytes(png);
    if (decoded.width !== this.resolution || decoded.height !== this.resolution) {
      this.error = `preset mask is ${decoded.width}x${decoded.height}, expected ${this.resolution}`;
      this.emit();
      return;
    }
    this.mask.setFromGray(decoded.toGray());
    this.error = null;
    this.emit();
  }

  exportMaskPng(): Uint8Array {
    this.requireConnected();
    return this.mask.toPngBytes();
  }

  async runTranslation(): Promise<ResultView | null> {
    this.requireConnected();
    if (!this.sourcePng) {
      this.error = "load a source image first";
      this.emit();
      return null;
    }
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.busy = true;
    this.error = null;
    const maskRevision = this.mask.revision;
    const maskPng = this.exportMaskPng();
    this.emit();
    let result: TranslateResult;
    try {
      result = await this.api.translate(this.direction, this.sourcePng, maskPng, controller.signal);
    } catch (exc) {
      if (controller.signal.aborted) return null; // superseded by a newer run
      this.error = exc instanceof ServiceError ? exc.message : String(exc);
      this.busy = false;
      this.emit();
      return null;
    }
    if (controller.signal.aborted) return null;
    this.inflight = null;
    this.busy = false;
    this.lastResult = { pngBytes: result.pngBytes, latencyMs: result.latencyMs, maskRevision };
    this.emit();
    return this.lastResult;
  }

  cancelTranslation(): void {
    this.inflight?.abort();
    this.inflight = null;
    this.busy = false;
    this.emit();
  }

  private requireConnected(): void {
    if (!this.connected) throw new Error("studio is not connected to a service");
  }
}
