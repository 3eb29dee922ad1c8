/** Procedural image fixtures: color-texture classes rendered as PPM files. */

import { promises as fs } from "fs";
import * as path from "path";

import { encodePpm, RawImage } from "../src/ppm.js";

type Rng = () => number;

export function mulberry32(seed: number): Rng {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const PALETTE: Record<string, [number, number, number]> = {
  reds: [200, 60, 50],
  greens: [60, 190, 70],
  blues: [50, 80, 210],
  golds: [210, 180, 40],
};

/** Base color + per-image brightness jitter + stripe overlay + pixel noise. */
export function renderImage(className: string, rng: Rng, size = 48): RawImage {
  const [r, g, b] = PALETTE[className];
  const brightness = 0.7 + 0.6 * rng();
  const stripePeriod = 4 + Math.floor(rng() * 8);
  const phase = Math.floor(rng() * stripePeriod);
  const horizontal = rng() < 0.5;
  const pixels = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const stripe =
        ((horizontal ? y : x) + phase) % stripePeriod < stripePeriod / 2 ? 1.0 : 0.75;
      const i = (y * size + x) * 3;
      for (const [c, base] of [r, g, b].entries()) {
        const noise = (rng() - 0.5) * 40;
        pixels[i + c] = Math.max(0, Math.min(255,
          Math.round(base * brightness * stripe + noise)));
      }
    }
  }
  return { width: size, height: size, pixels };
}

export async function writeDataset(
  root: string,
  perClass: number,
  classNames: string[] = Object.keys(PALETTE).sort(),
  seed = 7,
): Promise<string[]> {
  const rng = mulberry32(seed);
  for (const name of classNames) {
    const dir = path.join(root, name);
    await fs.mkdir(dir, { recursive: true });
    for (let i = 0; i < perClass; i++) {
      const file = path.join(dir, `img${String(i).padStart(3, "0")}.ppm`);
      await fs.writeFile(file, encodePpm(renderImage(name, rng)));
    }
  }
  return classNames;
}
