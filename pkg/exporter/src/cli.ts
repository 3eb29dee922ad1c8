#!/usr/bin/env node
/**
 * cleb-export export --dataset folder:./images --backbone toy-768 \
 *     --split "circles,squares;stripes,dots" --out features.cleb
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { runExport } from "./export.js";

export async function main(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .command(
      "export",
      "run a frozen backbone over an image dataset and write a CLEB1 file",
      (cmd) =>
        cmd
          .option("dataset", {
            type: "string",
            demandOption: true,
            describe: "folder:<path> or cifar100:<file>",
          })
          .option("backbone", {
            type: "string",
            demandOption: true,
            describe: "vit-b (needs --weights) or toy-768",
          })
          .option("split", {
            type: "string",
            describe: "task groups, e.g. \"0-4;5-9\" or \"cats,dogs;cars\"",
          })
          .option("out", { type: "string", demandOption: true })
          .option("weights", {
            type: "string",
            describe: "local PGVIT1 weights file for vit-b",
          })
          .option("batch-size", { type: "number", default: 16 }),
    )
    .demandCommand(1)
    .strict()
    .help();

  const args = await parser.parse();
  const set = await runExport({
    dataset: args.dataset as string,
    backbone: args.backbone as string,
    split: args.split as string | undefined,
    out: args.out as string,
    weights: args.weights as string | undefined,
    batchSize: args["batch-size"] as number,
  });
  console.log(
    `wrote ${args.out}: n=${set.labels.length} d=${set.dim}` +
    (set.taskIds ? ` tasks=${new Set(set.taskIds).size}` : ""),
  );
  return 0;
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(hideBin(process.argv))
    .then((code) => process.exit(code))
    .catch((err) => {
      console.error(`error: ${err.message}`);
      process.exit(1);
    });
}
