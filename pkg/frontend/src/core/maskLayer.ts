/**
 * Binary brush layer: one bit per pixel, stroke rasterization, and a bounded
 * undo/redo history. Exports are strictly binary 8-bit grayscale PNGs the
 * service accepts without re-binarization.
 */

import { decodeGrayPng, encodeGrayPng } from "./png.js";

export type BrushMode = "paint" | "erase";

export interface Brush {
  size: number;
  mode: BrushMode;
}

export interface StrokePoint {
  x: number;
  y: number;
}

const MAX_UNDO = 64; // spec floor is 20 lossless steps

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  /** bumped on every mutation; result staleness compares against it */
  revision = 0;

  private bits: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];

  constructor(width: number, height: number, fill: 0 | 1 = 0) {
    if (width < 1 || height < 1) throw new Error("mask layer needs positive dimensions");
    this.width = width;
    this.height = height;
    this.bits = new Uint8Array(width * height).fill(fill);
  }

  static async fromPngBytes(data: Uint8Array): Promise<MaskLayer> {
    const { width, height, gray } = await decodeGrayPng(data);
    const layer = new MaskLayer(width, height);
    for (let i = 0; i < gray.length; i++) {
      const v = gray[i];
      if (v !== 0 && v !== 255) throw new Error(`mask PNG has non-binary pixel value ${v}`);
      layer.bits[i] = v === 255 ? 1 : 0;
    }
    return layer;
  }

  get(x: number, y: number): 0 | 1 {
    return this.bits[y * this.width + x] as 0 | 1;
  }

  count(): number {
    let n = 0;
    for (let i = 0; i < this.bits.length; i++) n += this.bits[i];
    return n;
  }

  fraction(): number {
    return this.count() / this.bits.length;
  }

  /** live view for rendering; treat as read-only */
  view(): Uint8Array {
    return this.bits;
  }

  private pushUndo(): void {
    this.undoStack.push(this.bits.slice());
    if (this.undoStack.length > MAX_UNDO) this.undoStack.shift();
    this.redoStack.length = 0;
    this.revision++;
  }

  paintStroke(path: StrokePoint[], brush: Brush): void {
    if (path.length === 0) return;
    this.pushUndo();
    const value = brush.mode === "paint" ? 1 : 0;
    const radius = Math.max(0.5, brush.size / 2);
    const stamp = (cx: number, cy: number) => {
      const r = Math.ceil(radius);
      for (let dy = -r; dy <= r; dy++) {
        for (let dx = -r; dx <= r; dx++) {
          if (dx * dx + dy * dy > radius * radius) continue;
          const x = Math.round(cx + dx);
          const y = Math.round(cy + dy);
          if (x >= 0 && x < this.width && y >= 0 && y < this.height) {
            this.bits[y * this.width + x] = value;
          }
        }
      }
    };
    stamp(path[0].x, path[0].y);
    for (let i = 1; i < path.length; i++) {
      const a = path[i - 1];
      const b = path[i];
      const steps = Math.max(1, Math.ceil(Math.hypot(b.x - a.x, b.y - a.y)));
      for (let s = 1; s <= steps; s++) {
        stamp(a.x + ((b.x - a.x) * s) / steps, a.y + ((b.y - a.y) * s) / steps);
      }
    }
  }

  fill(value: 0 | 1): void {
    this.pushUndo();
    this.bits.fill(value);
  }

  /** replace the whole layer from {0,255} pixels (e.g. a decoded preset) */
  setFromGray(gray: Uint8Array): void {
    if (gray.length !== this.bits.length) {
      throw new Error(`preset size ${gray.length} does not match layer ${this.bits.length}`);
    }
    for (const v of gray) {
      if (v !== 0 && v !== 255) throw new Error(`non-binary pixel value ${v}`);
    }
    this.pushUndo();
    for (let i = 0; i < gray.length; i++) this.bits[i] = gray[i] === 255 ? 1 : 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.bits);
    this.bits = prev;
    this.revision++;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.bits);
    this.bits = next;
    this.revision++;
    return true;
  }

  toGray(): Uint8Array {
    const gray = new Uint8Array(this.bits.length);
    for (let i = 0; i < this.bits.length; i++) gray[i] = this.bits[i] ? 255 : 0;
    return gray;
  }

  toPngBytes(): Uint8Array {
    return encodeGrayPng(this.width, this.height, this.toGray());
  }

  equals(other: MaskLayer): boolean {
    if (other.width !== this.width || other.height !== this.height) return false;
    for (let i = 0; i < this.bits.length; i++) {
      if (this.bits[i] !== other.bits[i]) return false;
    }
    return true;
  }
}
