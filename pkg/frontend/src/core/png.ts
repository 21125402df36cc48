/**
 * Minimal PNG codec with no runtime dependencies.
 *
 * Encoding writes 8-bit grayscale or RGB with filter 0 rows and *stored*
 * (uncompressed) deflate blocks wrapped in a valid zlib stream, so it runs
 * in the browser and in node alike. Decoding handles any 8-bit gray/RGB/RGBA
 * PNG (all five row filters) but needs an inflate function supplied by the
 * host (node's zlib in tests; browsers never decode through this module).
 */

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];

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
  let crc = 0xffffffff;
  for (const b of bytes) {
    crc = CRC_TABLE[(crc ^ b) & 0xff] ^ (crc >>> 8);
  }
  return (crc ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (const byte of bytes) {
    a = (a + byte) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new TextEncoder().encode(type);
  const body = new Uint8Array(typeBytes.length + data.length);
  body.set(typeBytes);
  body.set(data, typeBytes.length);
  const out = new Uint8Array(4 + body.length + 4);
  out.set(u32be(data.length));
  out.set(body, 4);
  out.set(u32be(crc32(body)), 4 + body.length);
  return out;
}

/** zlib stream around stored (BTYPE=00) deflate blocks. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let off = 0; off < raw.length || raw.length === 0; off += max) {
    const part = raw.subarray(off, Math.min(off + max, raw.length));
    const final = off + max >= raw.length ? 1 : 0;
    const header = new Uint8Array(5);
    header[0] = final;
    header[1] = part.length & 0xff;
    header[2] = (part.length >>> 8) & 0xff;
    header[3] = ~part.length & 0xff;
    header[4] = (~part.length >>> 8) & 0xff;
    blocks.push(header, part);
    if (final) break;
  }
  blocks.push(u32be(adler32(raw)));
  const total = blocks.reduce((s, b) => s + b.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const b of blocks) {
    out.set(b, off);
    off += b.length;
  }
  return out;
}

export interface RawImage {
  width: number;
  height: number;
  channels: 1 | 3;
  /** row-major, length = width * height * channels */
  data: Uint8Array;
}

export function encodePng(img: RawImage): Uint8Array<ArrayBuffer> {
  const { width, height, channels, data } = img;
  if (data.length !== width * height * channels) {
    throw new Error(`data length ${data.length} != ${width}x${height}x${channels}`);
  }
  const colorType = channels === 1 ? 0 : 2;
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = colorType;
  // compression, filter, interlace all 0

  const stride = width * channels;
  const raw = new Uint8Array((stride + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter type 0
    raw.set(data.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }

  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  const total = parts.reduce((s, p) => s + p.length, 0);
  const out = new Uint8Array(total);
  let off = 0;
  for (const p of parts) {
    out.set(p, off);
    off += p.length;
  }
  return out;
}

/** Binary mask ({0,1} per pixel) to a grayscale PNG with masked = 255. */
export function encodeMaskPng(
  mask: Uint8Array,
  width: number,
  height: number
): Uint8Array<ArrayBuffer> {
  const data = new Uint8Array(mask.length);
  for (let i = 0; i < mask.length; i++) data[i] = mask[i] ? 255 : 0;
  return encodePng({ width, height, channels: 1, data });
}

export type Inflate = (data: Uint8Array) => Uint8Array;

export interface DecodedImage {
  width: number;
  height: number;
  channels: number;
  data: Uint8Array;
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

export function decodePng(bytes: Uint8Array, inflate: Inflate): DecodedImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let off = 8;
  let width = 0;
  let height = 0;
  let channels = 0;
  let bitDepth = 0;
  const idat: Uint8Array[] = [];
  while (off < bytes.length) {
    const len = view.getUint32(off);
    const type = new TextDecoder().decode(bytes.subarray(off + 4, off + 8));
    const data = bytes.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = view.getUint32(off + 8);
      height = view.getUint32(off + 12);
      bitDepth = bytes[off + 16];
      const colorType = bytes[off + 17];
      const byColor: Record<number, number> = { 0: 1, 2: 3, 4: 2, 6: 4 };
      channels = byColor[colorType];
      if (!channels || bitDepth !== 8) {
        throw new Error(`unsupported PNG: depth ${bitDepth}, color type ${colorType}`);
      }
      if (bytes[off + 20] !== 0) throw new Error("interlaced PNG unsupported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    off += 12 + len;
  }
  const compressed = new Uint8Array(idat.reduce((s, d) => s + d.length, 0));
  let coff = 0;
  for (const d of idat) {
    compressed.set(d, coff);
    coff += d.length;
  }
  const raw = inflate(compressed);
  const stride = width * channels;
  if (raw.length !== (stride + 1) * height) {
    throw new Error(`bad raw length ${raw.length}`);
  }
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let i = 0; i < stride; i++) {
      const a = i >= channels ? cur[i - channels] : 0;
      const b = prev ? prev[i] : 0;
      const c = i >= channels && prev ? prev[i - channels] : 0;
      let v = row[i];
      switch (filter) {
        case 0:
          break;
        case 1:
          v = (v + a) & 0xff;
          break;
        case 2:
          v = (v + b) & 0xff;
          break;
        case 3:
          v = (v + ((a + b) >> 1)) & 0xff;
          break;
        case 4:
          v = (v + paeth(a, b, c)) & 0xff;
          break;
        default:
          throw new Error(`unknown filter ${filter}`);
      }
      cur[i] = v;
    }
  }
  return { width, height, channels, data: out };
}

/** Decode a PNG to a {0,1} mask: any nonzero luminance means masked. */
export function decodeMask(bytes: Uint8Array, inflate: Inflate): {
  width: number;
  height: number;
  mask: Uint8Array;
} {
  const img = decodePng(bytes, inflate);
  const mask = new Uint8Array(img.width * img.height);
  for (let i = 0; i < mask.length; i++) {
    let lum = 0;
    for (let c = 0; c < Math.min(img.channels, 3); c++) {
      lum += img.data[i * img.channels + c];
    }
    mask[i] = lum > 0 ? 1 : 0;
  }
  return { width: img.width, height: img.height, mask };
}
