/** @file Frame codec: u32 payload length | u32 header length | JSON | blocks. */

import {
  ArrayView,
  BYTES_PER_ELEMENT,
  WireDtype,
  fromBytes,
  shapeSize,
  toBytes,
} from "./arrayview.js";

export const PROTOCOL_VERSION = 1;
export const ABI_STRING = "recolor-bridge/1";

interface ArrayDesc {
  name: string;
  dtype: WireDtype;
  shape: number[];
}

export interface FrameHeader {
  [key: string]: unknown;
  arrays?: ArrayDesc[];
}

export interface Frame {
  header: FrameHeader;
  arrays: Map<string, ArrayView>;
}

/** Encode one frame; named arrays ride after the JSON header in order. */
export function encodeFrame(
  header: Record<string, unknown>,
  arrays: ReadonlyArray<readonly [string, ArrayView]> = [],
): Buffer {
  const descs: ArrayDesc[] = [];
  const blocks: Uint8Array[] = [];
  for (const [name, arr] of arrays) {
    descs.push({ name, dtype: arr.dtype, shape: [...arr.shape] });
    blocks.push(toBytes(arr));
  }
  const json = Buffer.from(JSON.stringify({ ...header, arrays: descs }), "utf8");
  let total = 4 + json.length;
  for (const block of blocks) total += block.byteLength;

  const out = Buffer.allocUnsafe(4 + total);
  out.writeUInt32LE(total, 0);
  out.writeUInt32LE(json.length, 4);
  json.copy(out, 8);
  let offset = 8 + json.length;
  for (const block of blocks) {
    out.set(block, offset);
    offset += block.byteLength;
  }
  return out;
}

function isArrayDesc(value: unknown): value is ArrayDesc {
  if (typeof value !== "object" || value === null) return false;
  const desc = value as Record<string, unknown>;
  return (
    typeof desc.name === "string" &&
    (desc.dtype === "u8" || desc.dtype === "u16" || desc.dtype === "f32") &&
    Array.isArray(desc.shape)
  );
}

/** Decode one complete frame payload (the bytes after the leading u32). */
export function decodePayload(payload: Buffer): Frame {
  if (payload.length < 4) throw new Error("frame too short for header length");
  const headerLen = payload.readUInt32LE(0);
  if (4 + headerLen > payload.length) {
    throw new Error("header length exceeds frame");
  }
  const header = JSON.parse(
    payload.subarray(4, 4 + headerLen).toString("utf8"),
  ) as FrameHeader;
  const arrays = new Map<string, ArrayView>();
  let offset = 4 + headerLen;
  for (const desc of header.arrays ?? []) {
    if (!isArrayDesc(desc)) throw new Error("malformed array descriptor");
    const shape = desc.shape.map(Number);
    const nbytes = shapeSize(shape) * BYTES_PER_ELEMENT[desc.dtype];
    if (offset + nbytes > payload.length) {
      throw new Error(`array ${desc.name} truncated`);
    }
    arrays.set(
      desc.name,
      fromBytes(desc.dtype, shape, payload.subarray(offset, offset + nbytes)),
    );
    offset += nbytes;
  }
  if (offset !== payload.length) {
    throw new Error(`${payload.length - offset} trailing bytes in frame`);
  }
  return { header, arrays };
}

/**
 * Incremental frame splitter for a byte stream.  Feed chunks as they
 * arrive; complete frames come out in order.
 */
export class FrameDecoder {
  private pending: Buffer = Buffer.alloc(0);

  /** Append a chunk and decode every frame that is now complete. */
  push(chunk: Buffer): Frame[] {
    this.pending = this.pending.length
      ? Buffer.concat([this.pending, chunk])
      : chunk;
    const frames: Frame[] = [];
    while (this.pending.length >= 4) {
      const total = this.pending.readUInt32LE(0);
      if (this.pending.length < 4 + total) break;
      frames.push(decodePayload(this.pending.subarray(4, 4 + total)));
      this.pending = this.pending.subarray(4 + total);
    }
    return frames;
  }

  /** Bytes buffered but not yet forming a complete frame. */
  get buffered(): number {
    return this.pending.length;
  }
}
