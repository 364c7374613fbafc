import * as fs from "node:fs";

import { FormatError } from "./errors.js";

export type RasterData = Float32Array | Uint32Array | Uint16Array | Uint8Array;

export interface Raster {
  width: number;
  height: number;
  channels: number;
  dtype: "f32" | "u32" | "u16" | "u8";
  /** Row-major, channel-interleaved; length = width * height * channels. */
  data: RasterData;
}

const HEADER_BYTES = 24;
const MAGIC = 0x5252424b; // "KBRR" read as little-endian u32

const DTYPES = [
  { name: "f32", bytes: 4, make: (b: ArrayBuffer) => new Float32Array(b) },
  { name: "u32", bytes: 4, make: (b: ArrayBuffer) => new Uint32Array(b) },
  { name: "u16", bytes: 2, make: (b: ArrayBuffer) => new Uint16Array(b) },
  { name: "u8", bytes: 1, make: (b: ArrayBuffer) => new Uint8Array(b) },
] as const;

const PLATFORM_LE = new Uint8Array(new Uint16Array([1]).buffer)[0] === 1;

/** Parse a raster buffer; `source` only labels error messages. */
export function decodeRaster(buf: Uint8Array, source = "raster"): Raster {
  if (!PLATFORM_LE) {
    // payloads are little-endian and mapped straight into typed arrays
    throw new FormatError("big-endian platforms are not supported");
  }
  if (buf.length < HEADER_BYTES) {
    throw new FormatError(`${source}: truncated header (${buf.length} bytes)`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  if (view.getUint32(0, true) !== MAGIC) {
    throw new FormatError(`${source}: bad magic`);
  }
  const version = view.getUint32(4, true);
  if (version !== 1) {
    throw new FormatError(`${source}: unsupported version ${version}`);
  }
  const width = view.getUint32(8, true);
  const height = view.getUint32(12, true);
  const channels = view.getUint32(16, true);
  const code = view.getUint8(20);
  const dtype = DTYPES[code];
  if (dtype === undefined) {
    throw new FormatError(`${source}: unknown dtype code ${code}`);
  }
  const count = width * height * channels;
  const expected = HEADER_BYTES + count * dtype.bytes;
  if (buf.length !== expected) {
    throw new FormatError(
      `${source}: payload is ${buf.length - HEADER_BYTES} bytes, expected ${expected - HEADER_BYTES}`
    );
  }
  // copy into a fresh ArrayBuffer so the view is aligned and owns its memory
  const payload = new Uint8Array(buf.subarray(HEADER_BYTES));
  return {
    width,
    height,
    channels,
    dtype: dtype.name,
    data: dtype.make(payload.buffer),
  };
}

export function readRaster(path: string): Raster {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch {
    throw new FormatError(`missing raster file ${path}`);
  }
  return decodeRaster(buf, path);
}
