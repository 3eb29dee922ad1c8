"""Relative Mahalanobis Distance gate over task summary statistics.

A `TaskSummary` is the engine's entire memory of past data: per-class
running Gaussians, the pooled background Gaussian, and a precision matrix
frozen at the most recent task boundary. Novelty of an input is the minimum
over seen classes of (Mahalanobis distance to the class mean minus that
class's average self-distance); inputs above the score-buffer quantile are
routed to fresh prompts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .stats import (
    ClassStats,
    GlobalStats,
    PrecisionCache,
    as_feature_matrix,
    regularized_precision,
    update_md_hat,
)

__all__ = [
    "TaskSummary",
    "ScoreBuffer",
    "MaskDecision",
    "rmd_score",
    "rmd_scores",
    "threshold",
    "mask",
    "mask_many",
    "rank_auc",
    "separability_auc",
]


@dataclass
class TaskSummary:
    """Class-wise and global statistics as of the last completed task."""

    dim: int
    per_class: dict[int, ClassStats] = field(default_factory=dict)
    background: GlobalStats = None  # type: ignore[assignment]
    precision: PrecisionCache | None = None
    tasks_seen: int = 0

    def __post_init__(self):
        if self.background is None:
            self.background = GlobalStats(dim=self.dim)

    def class_ids(self) -> list[int]:
        return sorted(self.per_class)

    def class_means(self) -> np.ndarray:
        return np.stack([self.per_class[c].mean for c in self.class_ids()])

    def absorb_task(self, features, labels, epsilon: float | None = None) -> None:
        """End-of-task update: fold stats, refresh precision, update md_hats.

        Past md_hat contributions stay frozen; the new batch is scored
        against the refreshed class means and global precision.
        """
        x = as_feature_matrix(features, self.dim)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape[0] != x.shape[0]:
            raise ValueError("features and labels are misaligned")
        prev_counts = {c: cs.count for c, cs in self.per_class.items()}

        by_class: dict[int, np.ndarray] = {}
        for c in np.unique(labels):
            c = int(c)
            by_class[c] = x[labels == c]
            if c not in self.per_class:
                self.per_class[c] = ClassStats(dim=self.dim, class_id=c)
            self.per_class[c].fold(by_class[c])
        self.background.fold(x)

        self.precision = regularized_precision(self.background, epsilon)
        for c, batch in by_class.items():
            cs = self.per_class[c]
            cs.md_hat = update_md_hat(cs.md_hat, prev_counts.get(c, 0), batch,
                                      cs.mean, self.precision)
        self.tasks_seen += 1


@dataclass(frozen=True)
class MaskDecision:
    """Routing bit for one sample: 1 = novel (new prompts), 0 = familiar."""

    bit: int
    score: float
    threshold: float


class ScoreBuffer:
    """Retained RMD scores with per-task uniform reservoir capping.

    Only scalars are stored, keeping the gate rehearsal-free; the cap bounds
    memory at O(tasks). Appends are single-writer.
    """

    def __init__(self, capacity_per_task: int = 2048, seed: int = 0):
        if capacity_per_task < 1:
            raise ValueError("capacity_per_task must be >= 1")
        self.capacity_per_task = capacity_per_task
        self._kept: dict[int, np.ndarray] = {}
        self._seen: dict[int, int] = {}
        self._rng = np.random.default_rng([seed, 0x5C0E])

    def add_scores(self, task: int, values) -> None:
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("scores must be finite")
        if self._kept and task < max(self._kept):
            raise ValueError("task indices must be appended in non-decreasing order")
        kept = self._kept.get(task, np.empty(0))
        seen = self._seen.get(task, 0)
        cap = self.capacity_per_task
        n_fill = min(cap - kept.shape[0], values.size)
        if n_fill > 0:
            kept = np.concatenate([kept, values[:n_fill]])
            seen += n_fill
            values = values[n_fill:]
        for v in values:
            j = int(self._rng.integers(0, seen + 1))
            if j < cap:
                kept[j] = v
            seen += 1
        self._kept[task] = kept
        self._seen[task] = seen

    def scores(self) -> np.ndarray:
        if not self._kept:
            return np.empty(0)
        return np.concatenate([self._kept[t] for t in sorted(self._kept)])

    def per_task_counts(self) -> dict[int, int]:
        return dict(self._seen)

    def __len__(self) -> int:
        return int(sum(len(v) for v in self._kept.values()))


def rmd_scores(x, summary: TaskSummary) -> np.ndarray:
    """Batch RMD: per row, min over seen classes of (MD_c - md_hat_c)."""
    if not summary.per_class:
        raise ValueError("no history: the summary has no registered classes")
    if summary.precision is None:
        raise ValueError("no precision cache: absorb at least one task first")
    x = as_feature_matrix(x, summary.dim)
    ids = summary.class_ids()
    means = np.ascontiguousarray(np.stack([summary.per_class[c].mean for c in ids]))
    md_hats = np.ascontiguousarray([summary.per_class[c].md_hat for c in ids])
    return kernels.rmd_many(x, means, md_hats, summary.precision.precision)


def rmd_score(x, summary: TaskSummary) -> float:
    return float(rmd_scores(np.asarray(x, dtype=np.float64).reshape(1, -1), summary)[0])


def threshold(buffer: ScoreBuffer, q: float) -> float:
    """Nearest-rank empirical quantile: the ceil(q*n)-th smallest retained score."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    values = buffer.scores()
    if values.size == 0:
        raise ValueError("empty score buffer")
    k = int(np.ceil(q * values.size))
    return float(np.partition(values, k - 1)[k - 1])


def mask(x, summary: TaskSummary, tau: float) -> MaskDecision:
    """Route to old prompts (bit 0) when the score does not exceed tau."""
    score = rmd_score(x, summary)
    return MaskDecision(bit=int(score > tau), score=score, threshold=float(tau))


def mask_many(x, summary: TaskSummary, tau: float) -> list[MaskDecision]:
    scores = rmd_scores(x, summary)
    return [MaskDecision(bit=int(s > tau), score=float(s), threshold=float(tau))
            for s in scores]


def rank_auc(negative_scores, positive_scores) -> float:
    """Rank-sum AUC: P(random positive > random negative), ties counted half."""
    neg = np.asarray(negative_scores, dtype=np.float64).ravel()
    pos = np.asarray(positive_scores, dtype=np.float64).ravel()
    if neg.size == 0 or pos.size == 0:
        raise ValueError("both score sets must be non-empty")
    ranks = rankdata(np.concatenate([neg, pos]))
    rank_sum_pos = float(ranks[neg.size:].sum())
    u = rank_sum_pos - pos.size * (pos.size + 1) / 2.0
    return u / (pos.size * neg.size)


def separability_auc(summary: TaskSummary, seen, unseen) -> float:
    """AUC of RMD scores for discriminating unseen-task samples from seen ones."""
    return rank_auc(rmd_scores(seen, summary), rmd_scores(unseen, summary))
