"""Sectioned binary run-dump.

Layout: the 8-byte magic "PGDUMP1\\n", then sections of
(8-byte ASCII tag, u64 payload length, payload). Everything is
little-endian; matrices are row-major 64-bit IEEE-754. Wall-clock timings
are deliberately excluded so identical runs serialize byte-identically.

Section payloads:

  CONFIG    canonical resolved config text (UTF-8)
  STATS     u32 d | u64 global count | d f64 mean | d*d f64 cov
            | f64 epsilon_used | u64 precision source count | d*d f64 precision
            | u32 n_classes | per class (ascending id):
              i64 class id | u64 count | f64 md_hat | d f64 mean | d*d f64 cov
  POOL      u32 n_experts | u32 prompt_len | u32 d | per expert:
              u32 id | i32 birth task | d f64 key | prompt_len*d f64 params
  HEAD      u32 n_classes | u32 d | n_classes i64 class ids
            | n_classes*d f64 weights | n_classes f64 bias
            | f64 learning_rate | u32 epochs | u32 batch_size
            | f64 key_match_weight | u8 freeze_keys | i64 seed
  RESULT    u32 T | T*T f64 accuracy (NaN above diagonal) | T f64 tau
            | u32 n_experts | E u64 train counts | E u64 val counts
            | u32 n_probes | per probe: u32 boundary | 3 f64 (rmd, key, centroid)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .gate import TaskSummary
from .loop import RunResult
from .model import ClassifierHead, TrainConfig
from .pool import PromptPool

__all__ = ["write_run_dump", "read_run_dump", "DumpFormatError"]

MAGIC = b"PGDUMP1\n"


class DumpFormatError(ValueError):
    pass


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _stats_section(summary: TaskSummary) -> bytes:
    d = summary.dim
    parts = [struct.pack("<I", d)]
    g = summary.background
    parts.append(struct.pack("<Q", g.count))
    parts.append(_f64(g.mean))
    parts.append(_f64(g.cov))
    p = summary.precision
    if p is None:
        raise ValueError("cannot dump a summary with no precision cache")
    parts.append(struct.pack("<dQ", p.epsilon_used, p.source_count))
    parts.append(_f64(p.precision))
    parts.append(struct.pack("<I", len(summary.per_class)))
    for c in summary.class_ids():
        cs = summary.per_class[c]
        parts.append(struct.pack("<qQd", c, cs.count, cs.md_hat))
        parts.append(_f64(cs.mean))
        parts.append(_f64(cs.cov))
    return b"".join(parts)


def _pool_section(pool: PromptPool) -> bytes:
    parts = [struct.pack("<III", len(pool.experts), pool.prompt_len, pool.dim)]
    for e in pool.experts:
        parts.append(struct.pack("<Ii", e.id, e.birth_task))
        parts.append(_f64(e.key))
        parts.append(_f64(e.params))
    return b"".join(parts)


def _head_section(head: ClassifierHead, train: TrainConfig) -> bytes:
    parts = [struct.pack("<II", head.num_classes, head.dim)]
    parts.append(np.asarray(head.class_ids, dtype="<i8").tobytes())
    parts.append(_f64(head.weights))
    parts.append(_f64(head.bias))
    parts.append(struct.pack("<dIIdBq", train.learning_rate, train.epochs,
                             train.batch_size, train.key_match_weight,
                             int(train.freeze_keys), train.seed))
    return b"".join(parts)


def _result_section(result: RunResult) -> bytes:
    t = result.accuracy.shape[0]
    parts = [struct.pack("<I", t), _f64(result.accuracy), _f64(result.tau_per_task)]
    n_experts = result.train_usage_counts.shape[0]
    parts.append(struct.pack("<I", n_experts))
    parts.append(np.ascontiguousarray(result.train_usage_counts, dtype="<u8").tobytes())
    parts.append(np.ascontiguousarray(result.val_usage_counts, dtype="<u8").tobytes())
    parts.append(struct.pack("<I", len(result.auc_probes)))
    for probe in result.auc_probes:
        parts.append(struct.pack("<Iddd", probe["task"], probe["rmd"],
                                 probe["learnable_key"], probe["task_centroids"]))
    return b"".join(parts)


def write_run_dump(path, config_text: str, summary: TaskSummary,
                   pool: PromptPool, head: ClassifierHead, train: TrainConfig,
                   result: RunResult) -> None:
    sections = [
        (b"CONFIG  ", config_text.encode()),
        (b"STATS   ", _stats_section(summary)),
        (b"POOL    ", _pool_section(pool)),
        (b"HEAD    ", _head_section(head, train)),
        (b"RESULT  ", _result_section(result)),
    ]
    blob = [MAGIC]
    for tag, payload in sections:
        blob.append(tag)
        blob.append(struct.pack("<Q", len(payload)))
        blob.append(payload)
    Path(path).write_bytes(b"".join(blob))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise DumpFormatError("section payload truncated")
        values = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return values if len(values) > 1 else values[0]

    def array(self, count: int, dtype: str) -> np.ndarray:
        nbytes = count * np.dtype(dtype).itemsize
        if self.pos + nbytes > len(self.buf):
            raise DumpFormatError("section payload truncated")
        out = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.pos)
        self.pos += nbytes
        return out.copy()


def read_run_dump(path) -> dict:
    """Parse a run-dump into plain dict-of-arrays sections (for inspection)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise DumpFormatError(f"{path}: bad magic {raw[:8]!r}")
    pos = len(MAGIC)
    sections: dict[str, bytes] = {}
    while pos < len(raw):
        if pos + 16 > len(raw):
            raise DumpFormatError("truncated section header")
        tag = raw[pos: pos + 8].decode().strip()
        (length,) = struct.unpack_from("<Q", raw, pos + 8)
        pos += 16
        if pos + length > len(raw):
            raise DumpFormatError(f"section {tag}: truncated payload")
        sections[tag] = raw[pos: pos + length]
        pos += length

    out: dict = {"config": sections["CONFIG"].decode()}

    r = _Reader(sections["STATS"])
    d = r.take("<I")
    stats = {"dim": d, "global_count": r.take("<Q"),
             "global_mean": r.array(d, "<f8"),
             "global_cov": r.array(d * d, "<f8").reshape(d, d)}
    stats["epsilon_used"], stats["precision_source_count"] = r.take("<dQ")
    stats["precision"] = r.array(d * d, "<f8").reshape(d, d)
    classes = {}
    for _ in range(r.take("<I")):
        cid, count, md_hat = r.take("<qQd")
        classes[cid] = {"count": count, "md_hat": md_hat,
                        "mean": r.array(d, "<f8"),
                        "cov": r.array(d * d, "<f8").reshape(d, d)}
    stats["classes"] = classes
    out["stats"] = stats

    r = _Reader(sections["POOL"])
    n_experts, prompt_len, d = r.take("<III")
    experts = []
    for _ in range(n_experts):
        eid, birth = r.take("<Ii")
        experts.append({"id": eid, "birth_task": birth,
                        "key": r.array(d, "<f8"),
                        "params": r.array(prompt_len * d, "<f8").reshape(prompt_len, d)})
    out["pool"] = {"prompt_len": prompt_len, "dim": d, "experts": experts}

    r = _Reader(sections["HEAD"])
    n_classes, d = r.take("<II")
    head = {"class_ids": r.array(n_classes, "<i8"),
            "weights": r.array(n_classes * d, "<f8").reshape(n_classes, d),
            "bias": r.array(n_classes, "<f8")}
    (head["learning_rate"], head["epochs"], head["batch_size"],
     head["key_match_weight"], freeze, head["seed"]) = r.take("<dIIdBq")
    head["freeze_keys"] = bool(freeze)
    out["head"] = head

    r = _Reader(sections["RESULT"])
    t = r.take("<I")
    result = {"accuracy": r.array(t * t, "<f8").reshape(t, t),
              "tau_per_task": r.array(t, "<f8")}
    n_experts = r.take("<I")
    result["train_usage_counts"] = r.array(n_experts, "<u8")
    result["val_usage_counts"] = r.array(n_experts, "<u8")
    probes = []
    for _ in range(r.take("<I")):
        boundary, rmd, key, centroid = r.take("<Iddd")
        probes.append({"task": boundary, "rmd": rmd, "learnable_key": key,
                       "task_centroids": centroid})
    result["auc_probes"] = probes
    out["result"] = result
    return out
