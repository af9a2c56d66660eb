/** @file Typed array descriptors crossing the bridge boundary. */

export type WireDtype = "u8" | "u16" | "f32";

export type TypedData = Uint8Array | Uint16Array | Float32Array;

/**
 * A contiguous row-major array: data, shape, and element type.  The data is
 * always a copy on both sides of the boundary; views never alias live
 * environment state.
 */
export interface ArrayView {
  readonly dtype: WireDtype;
  readonly shape: readonly number[];
  readonly data: TypedData;
}

export const BYTES_PER_ELEMENT: Record<WireDtype, number> = {
  u8: 1,
  u16: 2,
  f32: 4,
};

// the wire format is little-endian and this client reinterprets raw bytes
if (new Uint8Array(new Uint16Array([1]).buffer)[0] !== 1) {
  throw new Error("recolor-bridge requires a little-endian platform");
}

/** Number of elements implied by a shape (empty shape = scalar = 1). */
export function shapeSize(shape: readonly number[]): number {
  let n = 1;
  for (const dim of shape) {
    if (!Number.isInteger(dim) || dim < 0) {
      throw new RangeError(`bad dimension ${dim} in shape [${shape}]`);
    }
    n *= dim;
  }
  return n;
}

function dtypeOf(data: TypedData): WireDtype {
  if (data instanceof Uint8Array) return "u8";
  if (data instanceof Uint16Array) return "u16";
  return "f32";
}

/** Wrap a typed array as an ArrayView, checking the element count. */
export function view(data: TypedData, shape: readonly number[]): ArrayView {
  const n = shapeSize(shape);
  if (data.length !== n) {
    throw new RangeError(
      `data has ${data.length} elements but shape [${shape}] needs ${n}`,
    );
  }
  return { dtype: dtypeOf(data), shape: [...shape], data };
}

/** Decode a little-endian byte block into a fresh typed array. */
export function fromBytes(
  dtype: WireDtype,
  shape: readonly number[],
  bytes: Uint8Array,
): ArrayView {
  const n = shapeSize(shape);
  const expected = n * BYTES_PER_ELEMENT[dtype];
  if (bytes.byteLength !== expected) {
    throw new RangeError(
      `block is ${bytes.byteLength} bytes but ${dtype}[${shape}] needs ${expected}`,
    );
  }
  // copy into an aligned buffer; the source may sit at any offset
  const copy = new Uint8Array(bytes);
  switch (dtype) {
    case "u8":
      return { dtype, shape: [...shape], data: copy };
    case "u16":
      return { dtype, shape: [...shape], data: new Uint16Array(copy.buffer) };
    case "f32":
      return { dtype, shape: [...shape], data: new Float32Array(copy.buffer) };
  }
}

/** Serialize the view's data as little-endian bytes (no header). */
export function toBytes(arr: ArrayView): Uint8Array {
  const { data } = arr;
  return new Uint8Array(data.buffer, data.byteOffset, data.byteLength).slice();
}
