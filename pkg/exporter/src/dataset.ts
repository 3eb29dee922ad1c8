/**
 * Dataset sources.
 *
 * `folder:<path>`    one subdirectory per class, binary PPM images inside;
 *                    classes are sorted subdirectory names, samples follow
 *                    dataset-native (sorted filename) order.
 * `cifar100:<file>`  a CIFAR-100 binary split file (train.bin / test.bin);
 *                    fine labels, file record order.
 */

import { promises as fs } from "fs";
import * as path from "path";

import { RawImage, decodePpm } from "./ppm.js";

export interface DatasetSample {
  image: RawImage;
  /** class id within the dataset's class list */
  classId: number;
}

export interface Dataset {
  classNames: string[];
  samples: DatasetSample[];
}

const CIFAR_RECORD = 2 + 3 * 1024;

async function loadFolder(root: string): Promise<Dataset> {
  let entries;
  try {
    entries = await fs.readdir(root, { withFileTypes: true });
  } catch (err) {
    throw new Error(`dataset folder ${root} is not readable: ${err}`);
  }
  const classNames = entries
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  if (classNames.length === 0) {
    throw new Error(`dataset folder ${root} contains no class subdirectories`);
  }
  const samples: DatasetSample[] = [];
  for (let classId = 0; classId < classNames.length; classId++) {
    const dir = path.join(root, classNames[classId]);
    const files = (await fs.readdir(dir)).filter((f) => f.endsWith(".ppm")).sort();
    for (const file of files) {
      samples.push({
        image: decodePpm(await fs.readFile(path.join(dir, file))),
        classId,
      });
    }
  }
  if (samples.length === 0) {
    throw new Error(`dataset folder ${root} contains no .ppm images`);
  }
  return { classNames, samples };
}

async function loadCifar100(file: string): Promise<Dataset> {
  let buf: Buffer;
  try {
    buf = await fs.readFile(file);
  } catch (err) {
    throw new Error(`CIFAR-100 binary ${file} is not readable: ${err}`);
  }
  if (buf.length === 0 || buf.length % CIFAR_RECORD !== 0) {
    throw new Error(
      `${file}: size ${buf.length} is not a multiple of the ${CIFAR_RECORD}-byte ` +
      `CIFAR-100 record`,
    );
  }
  const samples: DatasetSample[] = [];
  for (let off = 0; off < buf.length; off += CIFAR_RECORD) {
    const fineLabel = buf[off + 1];
    // channel-planar (R plane, G plane, B plane) -> interleaved RGB
    const pixels = new Uint8Array(32 * 32 * 3);
    for (let p = 0; p < 1024; p++) {
      pixels[p * 3] = buf[off + 2 + p];
      pixels[p * 3 + 1] = buf[off + 2 + 1024 + p];
      pixels[p * 3 + 2] = buf[off + 2 + 2048 + p];
    }
    samples.push({ image: { width: 32, height: 32, pixels }, classId: fineLabel });
  }
  const classNames = Array.from({ length: 100 }, (_, i) => `fine-${i}`);
  return { classNames, samples };
}

export async function loadDataset(spec: string): Promise<Dataset> {
  const sep = spec.indexOf(":");
  if (sep < 0) {
    throw new Error(
      `dataset spec ${spec} must look like folder:<path> or cifar100:<file>`,
    );
  }
  const kind = spec.slice(0, sep);
  const target = spec.slice(sep + 1);
  if (kind === "folder") return loadFolder(target);
  if (kind === "cifar100") return loadCifar100(target);
  throw new Error(`unknown dataset kind ${kind}; expected folder or cifar100`);
}
