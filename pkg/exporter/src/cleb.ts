/**
 * CLEB1 embedding-file writer (and reader, used by tests).
 *
 * Layout, all little-endian:
 *   magic "CLEB1" | u32 d | u64 n | u8 hasTaskIds
 *   | n*d f32 features (row-major) | n u32 labels | (if flag) n u16 task ids
 */

import { promises as fs } from "fs";
import * as path from "path";

export interface EmbeddingSet {
  /** row-major n*d feature matrix */
  features: Float32Array;
  dim: number;
  labels: Uint32Array;
  taskIds?: Uint16Array;
}

const MAGIC = "CLEB1";
const HEADER_BYTES = 5 + 4 + 8 + 1;

export function encodeCleb(set: EmbeddingSet): Buffer {
  const n = set.labels.length;
  if (set.dim <= 0 || n === 0) {
    throw new Error(`refusing to encode an empty embedding set (d=${set.dim}, n=${n})`);
  }
  if (set.features.length !== n * set.dim) {
    throw new Error(
      `feature matrix has ${set.features.length} values, expected ${n}*${set.dim}`,
    );
  }
  if (set.taskIds && set.taskIds.length !== n) {
    throw new Error(`task ids length ${set.taskIds.length} does not match n=${n}`);
  }
  const total =
    HEADER_BYTES + n * set.dim * 4 + n * 4 + (set.taskIds ? n * 2 : 0);
  const buf = Buffer.alloc(total);
  let off = buf.write(MAGIC, 0, "ascii");
  off = buf.writeUInt32LE(set.dim, off);
  off = Number(buf.writeBigUInt64LE(BigInt(n), off));
  off = buf.writeUInt8(set.taskIds ? 1 : 0, off);
  for (let i = 0; i < set.features.length; i++) {
    off = buf.writeFloatLE(set.features[i], off);
  }
  for (let i = 0; i < n; i++) {
    off = buf.writeUInt32LE(set.labels[i], off);
  }
  if (set.taskIds) {
    for (let i = 0; i < n; i++) {
      off = buf.writeUInt16LE(set.taskIds[i], off);
    }
  }
  return buf;
}

/** Write atomically: temp file in the same directory, then rename. */
export async function writeCleb(set: EmbeddingSet, outPath: string): Promise<void> {
  const buf = encodeCleb(set);
  const dir = path.dirname(path.resolve(outPath));
  await fs.mkdir(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(outPath)}.tmp-${process.pid}`);
  await fs.writeFile(tmp, buf);
  await fs.rename(tmp, outPath);
}

export function decodeCleb(buf: Buffer): EmbeddingSet {
  if (buf.length < HEADER_BYTES) {
    throw new Error("buffer too short to hold a CLEB1 header");
  }
  if (buf.toString("ascii", 0, 5) !== MAGIC) {
    throw new Error(`not an embedding file (magic ${buf.toString("ascii", 0, 5)})`);
  }
  const dim = buf.readUInt32LE(5);
  const n = Number(buf.readBigUInt64LE(9));
  const hasTaskIds = buf.readUInt8(17) === 1;
  const expected = HEADER_BYTES + n * dim * 4 + n * 4 + (hasTaskIds ? n * 2 : 0);
  if (buf.length !== expected) {
    throw new Error(`truncated payload: expected ${expected} bytes, got ${buf.length}`);
  }
  const features = new Float32Array(n * dim);
  let off = HEADER_BYTES;
  for (let i = 0; i < features.length; i++, off += 4) {
    features[i] = buf.readFloatLE(off);
  }
  const labels = new Uint32Array(n);
  for (let i = 0; i < n; i++, off += 4) {
    labels[i] = buf.readUInt32LE(off);
  }
  let taskIds: Uint16Array | undefined;
  if (hasTaskIds) {
    taskIds = new Uint16Array(n);
    for (let i = 0; i < n; i++, off += 2) {
      taskIds[i] = buf.readUInt16LE(off);
    }
  }
  return { features, dim, labels, taskIds };
}
