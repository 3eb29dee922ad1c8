/**
 * Task-split descriptors.
 *
 * A descriptor is semicolon-separated task groups; each group is a comma
 * list of class names (folder datasets) or class ids / `a-b` id ranges.
 * Example: "0-4;5-9" or "circles,squares;stripes,dots". Classes not named
 * by any group are dropped from the export.
 */

import { Dataset } from "./dataset.js";

export function parseSplit(spec: string, classNames: string[]): Map<number, number> {
  const byName = new Map(classNames.map((name, i) => [name, i]));
  const assignment = new Map<number, number>();
  const groups = spec.split(";").map((g) => g.trim()).filter((g) => g.length);
  if (groups.length === 0) {
    throw new Error("empty split descriptor");
  }
  groups.forEach((group, task) => {
    for (const part of group.split(",").map((p) => p.trim()).filter(Boolean)) {
      const range = part.match(/^(\d+)-(\d+)$/);
      const ids: number[] = [];
      if (range) {
        const [lo, hi] = [parseInt(range[1], 10), parseInt(range[2], 10)];
        if (hi < lo) throw new Error(`split range ${part} is reversed`);
        for (let i = lo; i <= hi; i++) ids.push(i);
      } else if (/^\d+$/.test(part)) {
        ids.push(parseInt(part, 10));
      } else if (byName.has(part)) {
        ids.push(byName.get(part)!);
      } else {
        throw new Error(`split names unknown class ${part}`);
      }
      for (const id of ids) {
        if (id >= classNames.length) {
          throw new Error(`split names class id ${id}, dataset has ${classNames.length}`);
        }
        if (assignment.has(id) && assignment.get(id) !== task) {
          throw new Error(`class ${part} assigned to two tasks`);
        }
        assignment.set(id, task);
      }
    }
  });
  return assignment;
}

export function assignTasks(dataset: Dataset, spec: string | undefined) {
  if (!spec) {
    return {
      keep: dataset.samples.map((_, i) => i),
      taskOf: () => 0,
    };
  }
  const assignment = parseSplit(spec, dataset.classNames);
  const keep = dataset.samples
    .map((sample, i) => ({ sample, i }))
    .filter(({ sample }) => assignment.has(sample.classId))
    .map(({ i }) => i);
  if (keep.length === 0) {
    throw new Error("split descriptor matches no samples");
  }
  return {
    keep,
    taskOf: (classId: number) => assignment.get(classId)!,
  };
}
