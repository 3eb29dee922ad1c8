"""Per-task continual-learning driver.

Pipeline for each task under the adaptive policy: grow the pool, mask each
training sample against the previous task summary and threshold, train on
the mask-restricted candidate sets, fold the task's features into the
statistics, refresh the precision and per-class self-distances, append the
task's scores to the buffer and recompute the threshold, then evaluate on
every test set seen so far. Raw features are dropped at task end; only
parameters, statistics and scalar scores survive.

The two baseline policies share the same skeleton: a fixed pool with no
masking (global pool) or per-task candidate restriction by birth task
(task specific). Inference never masks and never sees a task id.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import TaskStream
from .gate import (
    MaskDecision,
    ScoreBuffer,
    TaskSummary,
    mask_many,
    rank_auc,
    rmd_scores,
    separability_auc,
    threshold,
)
from .metrics import usage_proportions
from .model import ClassifierHead, TrainConfig, predict_many, train_task
from .pool import PromptPool, grow

__all__ = [
    "POLICY_KINDS",
    "RoutingPolicy",
    "RunConfig",
    "RunResult",
    "GateRecord",
    "EngineState",
    "run_sequence",
    "evaluate",
    "auc_probe",
]

POLICY_KINDS = ("adaptive_rmd", "global_pool", "task_specific")


@dataclass(frozen=True)
class RoutingPolicy:
    kind: str
    pool_size: int | None = None  # global_pool only; None = k_new * T

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; "
                             f"expected one of {POLICY_KINDS}")
        if self.pool_size is not None and self.pool_size < 1:
            raise ValueError("global pool size must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    policy: RoutingPolicy = RoutingPolicy("adaptive_rmd")
    prompt_len: int = 5
    top_k: int = 1
    k_new: int = 2
    quantile: float = 0.95
    epsilon: float | None = None  # None = trace-scaled default
    score_buffer_cap: int = 2048
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.quantile < 1.0:
            raise ValueError(f"quantile q must lie in (0, 1), got {self.quantile}")
        if min(self.prompt_len, self.top_k, self.k_new) < 1:
            raise ValueError("prompt_len, top_k and k_new must be >= 1")

    def resolved_train(self) -> TrainConfig:
        cfg = self.train
        return TrainConfig(cfg.learning_rate, cfg.epochs, cfg.batch_size,
                           cfg.key_match_weight, cfg.freeze_keys, self.seed)


@dataclass(frozen=True)
class GateRecord:
    task: int
    index: int
    score: float
    tau: float
    bit: int


@dataclass
class EngineState:
    """What survives a run: parameters, statistics, scalar scores. No raw data."""

    pool: PromptPool
    head: ClassifierHead
    summary: TaskSummary
    buffer: ScoreBuffer


@dataclass
class RunResult:
    accuracy: np.ndarray            # (T, T); NaN above the diagonal
    tau_per_task: np.ndarray        # threshold in effect while masking task t
    train_usage_counts: np.ndarray  # per-expert selection counts, training
    val_usage_counts: np.ndarray    # per-expert counts during final evaluation
    auc_probes: list[dict]          # per boundary: {"task", "rmd", ...}
    auc_average: dict[str, float]
    gate_records: list[GateRecord]
    wall_clock: list[float]         # seconds per task; not serialized
    state: EngineState | None = None

    @property
    def train_usage(self) -> np.ndarray:
        return usage_proportions(self.train_usage_counts)

    @property
    def val_usage(self) -> np.ndarray:
        return usage_proportions(self.val_usage_counts)


def evaluate(head: ClassifierHead, pool: PromptPool, top_k: int, test_sets,
             usage: np.ndarray | None = None) -> np.ndarray:
    """Task-id-free accuracy over each held-out split (order preserved)."""
    row = np.empty(len(test_sets))
    for j, split in enumerate(test_sets):
        if len(split) == 0:
            raise ValueError(f"empty test set at position {j}")
        preds = predict_many(split.features, head, pool, top_k, usage=usage)
        row[j] = float((preds == split.labels).mean())
    return row


def _max_cosine(x: np.ndarray, refs: np.ndarray) -> np.ndarray:
    unit_x = x / np.linalg.norm(x, axis=1, keepdims=True)
    unit_r = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    return (unit_x @ unit_r.T).max(axis=1)


def auc_probe(summary: TaskSummary, pool: PromptPool, stream: TaskStream,
              t: int) -> dict:
    """Seen-vs-unseen separability at boundary t for the three scoring rules.

    Seen = held-out samples of tasks <= t, unseen = samples of tasks > t;
    unseen is the positive class throughout.
    """
    if t >= len(stream.tasks) - 1:
        raise ValueError(f"no future tasks after boundary {t}")
    seen = np.concatenate([stream.tasks[j].test.features for j in range(t + 1)])
    unseen = np.concatenate([stream.tasks[j].test.features
                             for j in range(t + 1, len(stream.tasks))])

    probe = {"task": t, "rmd": separability_auc(summary, seen, unseen)}
    keys = pool.keys_matrix()
    probe["learnable_key"] = rank_auc(-_max_cosine(seen, keys),
                                      -_max_cosine(unseen, keys))
    centroids = summary.class_means()
    probe["task_centroids"] = rank_auc(-_max_cosine(seen, centroids),
                                       -_max_cosine(unseen, centroids))
    return probe


def _average_probes(probes: list[dict], n_tasks: int) -> dict[str, float]:
    """Mean AUC over interior boundaries 1..T-2 (all boundaries when T == 2)."""
    if not probes:
        return {}
    use = [p for p in probes if p["task"] >= 1] if n_tasks >= 3 else probes
    return {name: float(np.mean([p[name] for p in use]))
            for name in ("rmd", "learnable_key", "task_centroids")}


def run_sequence(config: RunConfig, stream: TaskStream) -> RunResult:
    """Run the full task sequence under the configured routing policy."""
    n_tasks = len(stream.tasks)
    if n_tasks < 1:
        raise ValueError("stream must contain at least one task")
    dim = stream.dim
    for t, task in enumerate(stream.tasks):
        if task.train.features.shape[1] != dim or len(task.train) == 0:
            raise ValueError(f"task {t}: empty train split or dimension mismatch")

    policy = config.policy
    pool = PromptPool(dim=dim, prompt_len=config.prompt_len)
    head = ClassifierHead(dim)
    summary = TaskSummary(dim)
    buffer = ScoreBuffer(config.score_buffer_cap, seed=config.seed)
    train_cfg = config.resolved_train()

    accuracy = np.full((n_tasks, n_tasks), np.nan)
    tau_per_task = np.full(n_tasks, np.nan)
    gate_records: list[GateRecord] = []
    probes: list[dict] = []
    wall_clock: list[float] = []
    train_counts: list[np.ndarray] = []
    val_counts = np.zeros(0, dtype=np.int64)
    prev_tau = np.nan

    for t, task in enumerate(stream.tasks):
        started = time.perf_counter()

        if policy.kind == "global_pool":
            if t == 0:
                size = policy.pool_size or config.k_new * n_tasks
                grow(pool, size, task=0, rng_seed=config.seed)
        else:
            grow(pool, config.k_new, task=t, rng_seed=config.seed)

        head.ensure_classes(task.train.labels)

        if policy.kind == "adaptive_rmd":
            if t == 0:
                routing = [MaskDecision(bit=1, score=np.nan, threshold=np.nan)
                           for _ in range(len(task.train))]
            else:
                routing = mask_many(task.train.features, summary, prev_tau)
            gate_records.extend(
                GateRecord(task=t, index=i, score=m.score, tau=m.threshold,
                           bit=m.bit)
                for i, m in enumerate(routing))
        else:
            routing = policy.kind
        tau_per_task[t] = prev_tau

        pool, head, usage = train_task(
            task.train.features, task.train.labels, routing, pool, head,
            train_cfg, current_task=t, top_k=config.top_k)
        train_counts.append(usage)

        # End-of-task statistics refresh; scores are taken against the
        # refreshed summary so the buffer matches what future samples see.
        summary.absorb_task(task.train.features, task.train.labels,
                            config.epsilon)
        buffer.add_scores(t, rmd_scores(task.train.features, summary))
        prev_tau = threshold(buffer, config.quantile)

        final = t == n_tasks - 1
        if final:
            val_counts = np.zeros(len(pool.experts), dtype=np.int64)
        accuracy[t, : t + 1] = evaluate(
            head, pool, config.top_k,
            [stream.tasks[j].test for j in range(t + 1)],
            usage=val_counts if final else None)

        if t < n_tasks - 1:
            probes.append(auc_probe(summary, pool, stream, t))

        wall_clock.append(time.perf_counter() - started)

    total_train = np.zeros(len(pool.experts), dtype=np.int64)
    for counts in train_counts:
        total_train[: counts.shape[0]] += counts

    return RunResult(
        accuracy=accuracy,
        tau_per_task=tau_per_task,
        train_usage_counts=total_train,
        val_usage_counts=val_counts,
        auc_probes=probes,
        auc_average=_average_probes(probes, n_tasks),
        gate_records=gate_records,
        wall_clock=wall_clock,
        state=EngineState(pool=pool, head=head, summary=summary, buffer=buffer),
    )
