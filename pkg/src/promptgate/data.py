"""Task-stream construction: synthetic Gaussian streams and embedding files.

Synthetic classes are fixed isotropic Gaussians whose means are derived
deterministically from (seed, class id), so a class that recurs in a later
task reuses exactly the same generator. The binary embedding format (magic
"CLEB1") carries frozen-backbone features produced by an external exporter;
layout, in order, all little-endian:

    magic "CLEB1" | u32 d | u64 n | u8 has_task_ids
    | n*d f32 features (row-major) | n u32 labels | (if flag) n u16 task ids
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TaskData",
    "Task",
    "TaskStream",
    "SyntheticStreamConfig",
    "generate_stream",
    "class_generator_mean",
    "sample_class",
    "load_embeddings",
    "store_embeddings",
    "read_embeddings",
    "EmbeddingFormatError",
]

MAGIC = b"CLEB1"
_HEADER = struct.Struct("<5sIQB")
TEST_STRIDE = 5  # every stride-th sample of a loaded task is held out


class EmbeddingFormatError(ValueError):
    """Raised when a file does not parse as a CLEB1 embedding file."""


@dataclass
class TaskData:
    """One split of one task: parallel feature/label arrays."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray    # (n,) int64

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels are misaligned")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class Task:
    train: TaskData
    test: TaskData
    classes: tuple[int, ...]


@dataclass
class TaskStream:
    tasks: list[Task]
    dim: int

    def __len__(self) -> int:
        return len(self.tasks)

    def subsample(self, fraction: float, seed: int) -> "TaskStream":
        """Uniform without-replacement subsample of each task's train split."""
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"data fraction must lie in (0, 1], got {fraction}")
        if fraction == 1.0:
            return self
        tasks = []
        for t, task in enumerate(self.tasks):
            rng = np.random.default_rng([seed, t, 0xF2AC])
            n = len(task.train)
            keep = max(1, int(round(fraction * n)))
            idx = np.sort(rng.choice(n, size=keep, replace=False))
            tasks.append(Task(
                train=TaskData(task.train.features[idx], task.train.labels[idx]),
                test=task.test,
                classes=task.classes,
            ))
        return TaskStream(tasks=tasks, dim=self.dim)


@dataclass
class SyntheticStreamConfig:
    tasks: int = 5
    dim: int = 16
    classes_per_task: int = 2
    overlap_fraction: float = 0.0
    samples_per_class_train: int = 100
    samples_per_class_test: int = 50
    mean_separation: float = 4.0
    noise_scale: float = 1.0
    center_norm: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.tasks, self.dim, self.classes_per_task,
               self.samples_per_class_train, self.samples_per_class_test) < 1:
            raise ValueError("counts and dimensions must be >= 1")
        if not 0.0 <= self.overlap_fraction <= 1.0:
            raise ValueError("overlap_fraction must lie in [0, 1]")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")
        if self.classes_per_task * self.tasks > 2**31:
            raise ValueError("class universe exceeds representable labels")


def class_generator_mean(config: SyntheticStreamConfig, class_id: int) -> np.ndarray:
    """Fixed Gaussian mean for a class: seed-deterministic point on the
    sphere of radius mean_separation*noise_scale (offset by a common center
    of norm center_norm, which controls how collapsed class directions are)."""
    rng = np.random.default_rng([config.seed, class_id, 0xC1A5])
    direction = rng.standard_normal(config.dim)
    direction /= np.linalg.norm(direction)
    radius = config.mean_separation * config.noise_scale
    center = np.zeros(config.dim)
    if config.center_norm > 0:
        center_rng = np.random.default_rng([config.seed, 0xCE27])
        center = center_rng.standard_normal(config.dim)
        center *= config.center_norm / np.linalg.norm(center)
    return center + radius * direction


def sample_class(config: SyntheticStreamConfig, class_id: int, n: int,
                 stream_key: int) -> np.ndarray:
    """Draw n samples from the class generator; stream_key decorrelates draws."""
    mean = class_generator_mean(config, class_id)
    rng = np.random.default_rng([config.seed, class_id, int(stream_key), 0x5A3B])
    return mean + config.noise_scale * rng.standard_normal((n, config.dim))


def _interleave(parts: list[tuple[np.ndarray, int]], rng) -> TaskData:
    features = np.concatenate([p[0] for p in parts])
    labels = np.concatenate([np.full(p[0].shape[0], p[1], dtype=np.int64)
                             for p in parts])
    order = rng.permutation(features.shape[0])
    return TaskData(features[order], labels[order])


def generate_stream(config: SyntheticStreamConfig) -> TaskStream:
    """Build a T-task stream; overlapped tasks reuse prior class generators."""
    rng = np.random.default_rng([config.seed, 0x57E4])
    seen: list[int] = []
    next_class = 0
    tasks: list[Task] = []
    for t in range(config.tasks):
        n_overlap = 0
        if t > 0:
            n_overlap = min(int(round(config.overlap_fraction *
                                      config.classes_per_task)), len(seen))
        reused = sorted(rng.choice(seen, size=n_overlap, replace=False).tolist()) \
            if n_overlap else []
        fresh = list(range(next_class, next_class + config.classes_per_task - n_overlap))
        next_class += len(fresh)
        classes = reused + fresh

        train = _interleave(
            [(sample_class(config, c, config.samples_per_class_train, 2 * t), c)
             for c in classes], rng)
        test = _interleave(
            [(sample_class(config, c, config.samples_per_class_test, 2 * t + 1), c)
             for c in classes], rng)
        tasks.append(Task(train=train, test=test, classes=tuple(classes)))
        seen.extend(c for c in fresh)
    return TaskStream(tasks=tasks, dim=config.dim)


def store_embeddings(samples, path) -> None:
    """Write features/labels(/task ids) to the CLEB1 layout.

    `samples` is either a TaskStream or a (features, labels, task_ids) tuple
    with task_ids optional (None omits them).
    """
    if isinstance(samples, TaskStream):
        features = np.concatenate([np.concatenate([t.train.features, t.test.features])
                                   for t in samples.tasks])
        labels = np.concatenate([np.concatenate([t.train.labels, t.test.labels])
                                 for t in samples.tasks])
        task_ids = np.concatenate([
            np.full(len(t.train) + len(t.test), i, dtype=np.uint16)
            for i, t in enumerate(samples.tasks)])
    else:
        features, labels, *rest = samples
        task_ids = rest[0] if rest else None
        features = np.asarray(features)
        labels = np.asarray(labels)
    if features.ndim != 2:
        raise ValueError("features must be a (n, d) matrix")
    n, d = features.shape
    if labels.shape != (n,):
        raise ValueError(f"dimension mismatch: {n} features vs {labels.shape} labels")
    if task_ids is not None and np.asarray(task_ids).shape != (n,):
        raise ValueError(f"dimension mismatch: {n} features vs task ids")
    if n == 0 or d == 0:
        raise ValueError("refusing to write an empty embedding file")

    path = Path(path)
    payload = [_HEADER.pack(MAGIC, d, n, 1 if task_ids is not None else 0),
               features.astype("<f4").tobytes(),
               labels.astype("<u4").tobytes()]
    if task_ids is not None:
        payload.append(np.asarray(task_ids).astype("<u2").tobytes())
    try:
        path.write_bytes(b"".join(payload))
    except OSError as exc:
        raise OSError(f"failed to write embedding file {path}: {exc}") from exc


def _split_by_stride(features: np.ndarray, labels: np.ndarray) -> tuple[TaskData, TaskData]:
    idx = np.arange(features.shape[0])
    is_test = (idx % TEST_STRIDE) == TEST_STRIDE - 1
    return (TaskData(features[~is_test], labels[~is_test]),
            TaskData(features[is_test], labels[is_test]))


def read_embeddings(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Raw CLEB1 contents in file order: (f32 features, u32 labels, u16 task ids)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: too short to hold a CLEB1 header")
    magic, d, n, has_task_ids = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise EmbeddingFormatError(f"{path}: not an embedding file (magic {magic!r})")
    if d == 0 or n == 0:
        raise EmbeddingFormatError(f"{path}: empty payload (d={d}, n={n})")
    expected = _HEADER.size + n * d * 4 + n * 4 + (n * 2 if has_task_ids else 0)
    if len(raw) != expected:
        raise EmbeddingFormatError(
            f"{path}: truncated or padded payload (expected {expected} bytes, "
            f"got {len(raw)})")

    offset = _HEADER.size
    features = np.frombuffer(raw, dtype="<f4", count=n * d, offset=offset).reshape(n, d)
    offset += n * d * 4
    labels = np.frombuffer(raw, dtype="<u4", count=n, offset=offset)
    offset += n * 4
    task_ids = np.frombuffer(raw, dtype="<u2", count=n, offset=offset) \
        if has_task_ids else None
    return features, labels, task_ids


def load_embeddings(path) -> TaskStream:
    """Parse a CLEB1 file into a TaskStream.

    Tasks come from embedded task ids; without them a sidecar manifest
    `<path>.splits` (JSON: list of class-id lists) may define the grouping,
    else everything lands in a single task. Each task's samples are split
    train/test by a fixed stride (every 5th sample held out).
    """
    path = Path(path)
    raw_features, raw_labels, raw_task_ids = read_embeddings(path)
    n, d = raw_features.shape
    features = raw_features.astype(np.float64)
    labels = raw_labels.astype(np.int64)

    if raw_task_ids is not None:
        task_ids = raw_task_ids.astype(np.int64)
    else:
        sidecar = path.with_name(path.name + ".splits")
        task_ids = np.zeros(n, dtype=np.int64)
        if sidecar.exists():
            groups = json.loads(sidecar.read_text())
            class_to_task = {int(c): t for t, cls in enumerate(groups) for c in cls}
            try:
                task_ids = np.array([class_to_task[int(c)] for c in labels])
            except KeyError as exc:
                raise EmbeddingFormatError(
                    f"{sidecar}: class {exc.args[0]} missing from manifest") from None

    tasks = []
    for t in np.unique(task_ids):
        sel = task_ids == t
        train, test = _split_by_stride(features[sel], labels[sel])
        tasks.append(Task(train=train, test=test,
                          classes=tuple(sorted(int(c) for c in np.unique(labels[sel])))))
    return TaskStream(tasks=tasks, dim=int(d))
