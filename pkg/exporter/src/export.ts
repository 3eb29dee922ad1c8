/**
 * Export pipeline: dataset -> resize 224x224 + normalize [0,1] -> frozen
 * backbone -> CLEB1 file. Sample order is dataset-native; the write is
 * atomic (temp file + rename); the output dimension is validated against
 * the backbone width before anything is written.
 */

import * as tf from "@tensorflow/tfjs";

import { Backbone, createBackbone } from "./backbone.js";
import { EmbeddingSet, writeCleb } from "./cleb.js";
import { Dataset, loadDataset } from "./dataset.js";
import { RawImage } from "./ppm.js";
import { assignTasks } from "./split.js";

export interface ExportJob {
  dataset: string;
  backbone: string;
  split?: string;
  out: string;
  weights?: string;
  batchSize?: number;
}

export const INPUT_SIZE = 224;

export function preprocess(images: RawImage[]): tf.Tensor4D {
  return tf.tidy(() => {
    const resized = images.map((img) => {
      const raw = tf.tensor3d(img.pixels, [img.height, img.width, 3], "float32");
      return tf.image.resizeBilinear(raw as tf.Tensor3D, [INPUT_SIZE, INPUT_SIZE]);
    });
    return tf.stack(resized).div(255.0) as tf.Tensor4D;
  });
}

export async function runExport(
  job: ExportJob,
  backboneOverride?: Backbone,
): Promise<EmbeddingSet> {
  const dataset: Dataset = await loadDataset(job.dataset);
  const backbone = backboneOverride
    ?? await createBackbone(job.backbone, job.weights);
  const { keep, taskOf } = assignTasks(dataset, job.split);

  const n = keep.length;
  const features = new Float32Array(n * backbone.dim);
  const labels = new Uint32Array(n);
  const taskIds = job.split ? new Uint16Array(n) : undefined;

  const batchSize = job.batchSize ?? 16;
  for (let start = 0; start < n; start += batchSize) {
    const index = keep.slice(start, start + batchSize);
    const batch = preprocess(index.map((i) => dataset.samples[i].image));
    const embedded = backbone.embed(batch);
    if (embedded.shape[1] !== backbone.dim) {
      batch.dispose();
      embedded.dispose();
      throw new Error(
        `backbone returned width ${embedded.shape[1]}, header needs ${backbone.dim}; ` +
        `aborting before writing`,
      );
    }
    const values = await embedded.data();
    features.set(values, start * backbone.dim);
    index.forEach((sampleIndex, row) => {
      const classId = dataset.samples[sampleIndex].classId;
      labels[start + row] = classId;
      if (taskIds) taskIds[start + row] = taskOf(classId);
    });
    batch.dispose();
    embedded.dispose();
  }

  for (const value of features) {
    if (!Number.isFinite(value)) {
      throw new Error("backbone produced non-finite features; aborting before writing");
    }
  }
  const set: EmbeddingSet = { features, dim: backbone.dim, labels, taskIds };
  await writeCleb(set, job.out);
  return set;
}
