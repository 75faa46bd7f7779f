/**
 * Boundary codec: flat float64 arrays as little-endian hex strings.
 *
 * Hex round-trips every bit pattern exactly, which is what keeps the host
 * numerically indistinguishable from the native side.
 */

export function f64ToHex(values: ArrayLike<number>): string {
  if (values.length === 0) {
    return "-";
  }
  const buf = new ArrayBuffer(values.length * 8);
  const view = new DataView(buf);
  for (let i = 0; i < values.length; i++) {
    view.setFloat64(i * 8, values[i], true);
  }
  return Buffer.from(buf).toString("hex");
}

export function hexToF64(payload: string): Float64Array {
  if (payload === "-" || payload.length === 0) {
    return new Float64Array(0);
  }
  const buf = Buffer.from(payload, "hex");
  if (buf.length % 8 !== 0) {
    throw new Error(`payload length ${buf.length} is not a multiple of 8`);
  }
  const out = new Float64Array(buf.length / 8);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getFloat64(i * 8, true);
  }
  return out;
}
