import { promises as fs } from "fs";
import * as os from "os";
import * as path from "path";

import { describe, beforeAll, afterAll, expect, it } from "vitest";

import {
  createBackbone,
  seededGaussians,
  vitParameterCount,
  VitConfig,
} from "../src/backbone.js";
import { preprocess } from "../src/export.js";
import { mulberry32, renderImage } from "./fixtures.js";

let workdir: string;

// depth-1 / patch-32 keeps the CPU forward pass test-sized; the reader and
// forward pass are config-driven, so the real ViT-B/16 layout exercises the
// same code with a different header.
const TEST_CONFIG: VitConfig = {
  depth: 1, heads: 12, width: 768, mlpRatio: 4, patch: 32, imageSize: 224,
};

async function writeWeights(file: string, config: VitConfig, scale = 0.02) {
  const count = vitParameterCount(config);
  const values = seededGaussians(123, count);
  for (let i = 0; i < count; i++) values[i] *= scale;
  const header = Buffer.from(JSON.stringify(config), "utf8");
  const buf = Buffer.alloc(6 + 4 + header.length + count * 4);
  buf.write("PGVIT1", 0, "ascii");
  buf.writeUInt32LE(header.length, 6);
  header.copy(buf, 10);
  Buffer.from(values.buffer).copy(buf, 10 + header.length);
  await fs.writeFile(file, buf);
}

beforeAll(async () => {
  workdir = await fs.mkdtemp(path.join(os.tmpdir(), "cleb-vit-"));
});

afterAll(async () => {
  await fs.rm(workdir, { recursive: true, force: true });
});

describe("vit backbone", () => {
  it("needs local weights and says how to provide them", async () => {
    await expect(createBackbone("vit-b")).rejects.toThrow(/--weights/);
    await expect(createBackbone("vit-b", path.join(workdir, "missing.bin")))
      .rejects.toThrow(/not.*readable|--weights/);
  });

  it("rejects malformed weights files", async () => {
    const bad = path.join(workdir, "bad.bin");
    await fs.writeFile(bad, Buffer.from("NOTVIT--------", "ascii"));
    await expect(createBackbone("vit-b", bad)).rejects.toThrow(/PGVIT1/);

    const short = path.join(workdir, "short.bin");
    await writeWeights(short, TEST_CONFIG);
    const full = await fs.readFile(short);
    await fs.writeFile(short, full.subarray(0, full.length - 400));
    await expect(createBackbone("vit-b", short)).rejects.toThrow(/parameters/);
  });

  it("runs a forward pass: d=768, finite, deterministic, input-sensitive",
    async () => {
      const file = path.join(workdir, "tiny-vit.bin");
      await writeWeights(file, TEST_CONFIG);
      const backbone = await createBackbone("vit-b", file);
      expect(backbone.dim).toBe(768);

      const rng = mulberry32(9);
      const images = [
        renderImage("reds", rng), renderImage("blues", rng),
      ];
      const batch = preprocess(images);
      const first = await backbone.embed(batch).data();
      const second = await backbone.embed(batch).data();
      batch.dispose();

      expect(first.length).toBe(2 * 768);
      expect([...first].every(Number.isFinite)).toBe(true);
      expect(Buffer.from(new Float32Array(first).buffer).equals(
        Buffer.from(new Float32Array(second).buffer))).toBe(true);
      // distinct images produce distinct embeddings
      const a = first.slice(0, 768);
      const b = first.slice(768);
      const diff = Math.max(...a.map((v, i) => Math.abs(v - b[i])));
      expect(diff).toBeGreaterThan(1e-4);
    }, 300_000);
});
