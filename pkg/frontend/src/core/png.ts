/**
 * Minimal grayscale PNG codec.
 *
 * Encoding writes 8-bit grayscale with filter 0 and an uncompressed
 * ("stored") zlib stream, so the bytes are a deterministic function of the
 * pixels. Decoding handles non-interlaced grayscale PNGs at bit depth 1 or 8
 * with all five scanline filters — enough for the service's 1-bit masks and
 * the studio's own exports.
 */

export interface GrayImage {
  width: number;
  height: number;
  /** one byte per pixel, 0..255 */
  gray: Uint8Array;
}

const PNG_SIGNATURE = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new Uint8Array([...type].map((c) => c.charCodeAt(0)));
  const body = concat([typeBytes, data]);
  return concat([u32be(data.length), body, u32be(crc32(body))]);
}

/** zlib stream built from stored (uncompressed) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const blockSize = 65535;
  for (let start = 0; start < raw.length || start === 0; start += blockSize) {
    const end = Math.min(start + blockSize, raw.length);
    const len = end - start;
    const final = end >= raw.length ? 1 : 0;
    const header = new Uint8Array([
      final,
      len & 0xff,
      (len >>> 8) & 0xff,
      ~len & 0xff,
      (~len >>> 8) & 0xff,
    ]);
    parts.push(header, raw.subarray(start, end));
    if (end >= raw.length) break;
  }
  parts.push(u32be(adler32(raw)));
  return concat(parts);
}

export function encodeGrayPng(width: number, height: number, gray: Uint8Array): Uint8Array {
  if (gray.length !== width * height) {
    throw new Error(`pixel buffer length ${gray.length} != ${width}x${height}`);
  }
  const ihdr = concat([
    u32be(width),
    u32be(height),
    new Uint8Array([8, 0, 0, 0, 0]), // bit depth 8, grayscale, deflate, filter 0, no interlace
  ]);
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    // filter byte 0 then the scanline
    raw.set(gray.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  return concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(new DecompressionStream("deflate"));
  return new Uint8Array(await new Response(stream).arrayBuffer());
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

function unfilter(raw: Uint8Array, bytesPerLine: number, height: number): Uint8Array {
  const out = new Uint8Array(bytesPerLine * height);
  const bpp = 1; // grayscale at depth <= 8
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (bytesPerLine + 1)];
    const line = raw.subarray(y * (bytesPerLine + 1) + 1, (y + 1) * (bytesPerLine + 1));
    const row = out.subarray(y * bytesPerLine, (y + 1) * bytesPerLine);
    const prev = y > 0 ? out.subarray((y - 1) * bytesPerLine, y * bytesPerLine) : null;
    for (let x = 0; x < bytesPerLine; x++) {
      const left = x >= bpp ? row[x - bpp] : 0;
      const up = prev ? prev[x] : 0;
      const upLeft = prev && x >= bpp ? prev[x - bpp] : 0;
      let value = line[x];
      switch (filter) {
        case 0: break;
        case 1: value = (value + left) & 0xff; break;
        case 2: value = (value + up) & 0xff; break;
        case 3: value = (value + ((left + up) >> 1)) & 0xff; break;
        case 4: value = (value + paeth(left, up, upLeft)) & 0xff; break;
        default: throw new Error(`unsupported PNG filter ${filter}`);
      }
      row[x] = value;
    }
  }
  return out;
}

export async function decodeGrayPng(data: Uint8Array): Promise<GrayImage> {
  for (let i = 0; i < PNG_SIGNATURE.length; i++) {
    if (data[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let offset = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  const idatParts: Uint8Array[] = [];
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  while (offset < data.length) {
    const length = view.getUint32(offset);
    const type = String.fromCharCode(data[offset + 4], data[offset + 5], data[offset + 6], data[offset + 7]);
    const body = data.subarray(offset + 8, offset + 8 + length);
    if (type === "IHDR") {
      width = view.getUint32(offset + 8);
      height = view.getUint32(offset + 12);
      bitDepth = body[8];
      const colorType = body[9];
      const interlace = body[12];
      if (colorType !== 0) throw new Error(`expected grayscale PNG, got color type ${colorType}`);
      if (bitDepth !== 1 && bitDepth !== 8) throw new Error(`unsupported bit depth ${bitDepth}`);
      if (interlace !== 0) throw new Error("interlaced PNG not supported");
    } else if (type === "IDAT") {
      idatParts.push(body);
    } else if (type === "IEND") {
      break;
    }
    offset += 12 + length;
  }
  if (width === 0 || height === 0) throw new Error("PNG missing IHDR");
  const raw = await inflate(concat(idatParts));
  const bytesPerLine = Math.ceil((width * bitDepth) / 8);
  const unfiltered = unfilter(raw, bytesPerLine, height);
  const gray = new Uint8Array(width * height);
  if (bitDepth === 8) {
    gray.set(unfiltered.subarray(0, width * height));
  } else {
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const byte = unfiltered[y * bytesPerLine + (x >> 3)];
        const bit = (byte >> (7 - (x & 7))) & 1;
        gray[y * width + x] = bit ? 255 : 0;
      }
    }
  }
  return { width, height, gray };
}
