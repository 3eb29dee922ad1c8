/**
 * Frozen feature extractors. Inputs arrive as (batch, 224, 224, 3) tensors
 * normalized to [0, 1]; outputs are (batch, dim) embeddings.
 *
 * `vit-b` runs a real ViT-B/16 forward pass from a local PGVIT1 weights
 * file (no network access is ever attempted). `toy-768` is a deterministic
 * seeded stand-in with the same 768-wide output, for tests and offline
 * pipelines where pretrained weights are unavailable.
 */

import { promises as fs } from "fs";

import * as tf from "@tensorflow/tfjs";

export interface Backbone {
  name: string;
  dim: number;
  embed(batch: tf.Tensor4D): tf.Tensor2D;
}

/** mulberry32 + Box-Muller: reproducible gaussians without extra deps */
export function seededGaussians(seed: number, count: number): Float32Array {
  let state = seed >>> 0;
  const next = () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  const out = new Float32Array(count);
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(next(), 1e-12);
    const v = next();
    const r = Math.sqrt(-2 * Math.log(u));
    out[i] = r * Math.cos(2 * Math.PI * v);
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v);
  }
  return out;
}

const TOY_DIM = 768;
const TOY_SEED = 0xc1eb;

/**
 * Average-patch featurizer: mean of the 196 raw 16x16x3 patches (768 values)
 * pushed through a fixed seeded square mixing matrix and tanh.
 */
export function createToyBackbone(): Backbone {
  const mixing = tf.tensor2d(
    seededGaussians(TOY_SEED, TOY_DIM * TOY_DIM),
    [TOY_DIM, TOY_DIM],
  ).div(Math.sqrt(TOY_DIM)) as tf.Tensor2D;
  return {
    name: "toy-768",
    dim: TOY_DIM,
    embed: (batch) =>
      tf.tidy(() => {
        const b = batch.shape[0];
        const patches = batch
          .reshape([b, 14, 16, 14, 16, 3])
          .transpose([0, 1, 3, 2, 4, 5])
          .reshape([b, 196, TOY_DIM]);
        const avg = patches.mean(1) as tf.Tensor2D;
        return tf.tanh(avg.matMul(mixing)) as tf.Tensor2D;
      }),
  };
}

export interface VitConfig {
  depth: number;
  heads: number;
  width: number;
  mlpRatio: number;
  patch: number;
  imageSize: number;
}

const VIT_MAGIC = "PGVIT1";

/** Flat-f32 weights file: magic | u32 JSON-config length | JSON | tensors. */
export async function readVitWeights(
  path: string,
): Promise<{ config: VitConfig; values: Float32Array }> {
  let buf: Buffer;
  try {
    buf = await fs.readFile(path);
  } catch {
    throw new Error(
      `backbone vit-b needs local pretrained weights, but ${path} is not ` +
      `readable; pass --weights <file> in the PGVIT1 layout (no weights are ` +
      `ever downloaded)`,
    );
  }
  if (buf.toString("ascii", 0, 6) !== VIT_MAGIC) {
    throw new Error(`${path}: not a PGVIT1 weights file`);
  }
  const jsonLen = buf.readUInt32LE(6);
  const config = JSON.parse(buf.toString("utf8", 10, 10 + jsonLen)) as VitConfig;
  const body = buf.subarray(10 + jsonLen);
  if (body.length % 4 !== 0) {
    throw new Error(`${path}: tensor payload is not f32-aligned`);
  }
  const values = new Float32Array(
    body.buffer, body.byteOffset, body.length / 4,
  ).slice();
  return { config, values };
}

export function vitParameterCount(c: VitConfig): number {
  const tokens = (c.imageSize / c.patch) ** 2 + 1;
  const mlp = Math.round(c.width * c.mlpRatio);
  const perLayer =
    2 * c.width +                       // ln1
    c.width * 3 * c.width + 3 * c.width + // qkv
    c.width * c.width + c.width +       // proj
    2 * c.width +                       // ln2
    c.width * mlp + mlp +               // fc1
    mlp * c.width + c.width;            // fc2
  return (
    c.patch * c.patch * 3 * c.width + c.width + // patch embed
    c.width +                                   // cls token
    tokens * c.width +                          // positional embed
    c.depth * perLayer +
    2 * c.width                                 // final ln
  );
}

export async function createVitBackbone(weightsPath: string): Promise<Backbone> {
  const { config, values } = await readVitWeights(weightsPath);
  const expected = vitParameterCount(config);
  if (values.length !== expected) {
    throw new Error(
      `${weightsPath}: holds ${values.length} parameters, the declared ` +
      `configuration needs ${expected}`,
    );
  }
  const tokens = (config.imageSize / config.patch) ** 2 + 1;
  const mlp = Math.round(config.width * config.mlpRatio);
  let cursor = 0;
  const take = (shape: number[]): tf.Tensor => {
    const size = shape.reduce((a, b) => a * b, 1);
    const t = tf.tensor(values.subarray(cursor, cursor + size), shape);
    cursor += size;
    return t;
  };

  const patchKernel = take([config.patch, config.patch, 3, config.width]);
  const patchBias = take([config.width]);
  const clsToken = take([1, 1, config.width]);
  const posEmbed = take([1, tokens, config.width]);
  const layers = Array.from({ length: config.depth }, () => ({
    ln1g: take([config.width]), ln1b: take([config.width]),
    qkvW: take([config.width, 3 * config.width]), qkvB: take([3 * config.width]),
    projW: take([config.width, config.width]), projB: take([config.width]),
    ln2g: take([config.width]), ln2b: take([config.width]),
    fc1W: take([config.width, mlp]), fc1B: take([mlp]),
    fc2W: take([mlp, config.width]), fc2B: take([config.width]),
  }));
  const lnFg = take([config.width]);
  const lnFb = take([config.width]);

  const layerNorm = (x: tf.Tensor, gamma: tf.Tensor, beta: tf.Tensor) => {
    const mean = x.mean(-1, true);
    const centered = x.sub(mean);
    const variance = centered.square().mean(-1, true);
    return centered.div(variance.add(1e-6).sqrt()).mul(gamma).add(beta);
  };

  const headDim = config.width / config.heads;
  const attention = (x: tf.Tensor, layer: (typeof layers)[number], b: number) => {
    const qkv = x.reshape([b * tokens, config.width])
      .matMul(layer.qkvW as tf.Tensor2D).add(layer.qkvB)
      .reshape([b, tokens, 3, config.heads, headDim])
      .transpose([2, 0, 3, 1, 4]); // (3, b, heads, tokens, headDim)
    const [q, k, v] = tf.split(qkv, 3, 0).map((t) =>
      t.reshape([b, config.heads, tokens, headDim]));
    const scores = q.matMul(k, false, true).div(Math.sqrt(headDim));
    const context = tf.softmax(scores, -1).matMul(v)
      .transpose([0, 2, 1, 3])
      .reshape([b * tokens, config.width]);
    return context.matMul(layer.projW as tf.Tensor2D).add(layer.projB)
      .reshape([b, tokens, config.width]);
  };

  return {
    name: "vit-b",
    dim: config.width,
    embed: (batch) =>
      tf.tidy(() => {
        const b = batch.shape[0];
        let h = tf.conv2d(batch, patchKernel as tf.Tensor4D, config.patch, "valid")
          .add(patchBias)
          .reshape([b, tokens - 1, config.width]);
        h = tf.concat([clsToken.tile([b, 1, 1]), h], 1).add(posEmbed);
        for (const layer of layers) {
          h = h.add(attention(layerNorm(h, layer.ln1g, layer.ln1b), layer, b));
          const y = layerNorm(h, layer.ln2g, layer.ln2b)
            .reshape([b * tokens, config.width])
            .matMul(layer.fc1W as tf.Tensor2D).add(layer.fc1B);
          const gelu = y.mul(0.5).mul(tf.erf(y.div(Math.sqrt(2))).add(1));
          const z = gelu
            .matMul(layer.fc2W as tf.Tensor2D).add(layer.fc2B)
            .reshape([b, tokens, config.width]);
          h = h.add(z);
        }
        const final = layerNorm(h, lnFg, lnFb);
        return final
          .slice([0, 0, 0], [b, 1, config.width])
          .reshape([b, config.width]) as tf.Tensor2D;
      }),
  };
}

export async function createBackbone(
  id: string,
  weightsPath?: string,
): Promise<Backbone> {
  if (id === "toy-768") return createToyBackbone();
  if (id === "vit-b") {
    if (!weightsPath) {
      throw new Error(
        "backbone vit-b needs local pretrained weights: pass --weights <file> " +
        "in the PGVIT1 layout (no weights are ever downloaded)",
      );
    }
    return createVitBackbone(weightsPath);
  }
  throw new Error(`unknown backbone ${id}; expected vit-b or toy-768`);
}
