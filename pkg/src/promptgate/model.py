"""Prompt-modulated classifier and the per-task training loop.

Modulation is a desk-scale surrogate: the selected prompts' rows are
mean-pooled and added to the frozen feature vector. This keeps the
routing-dependent credit assignment (an expert only learns from samples
routed to it) without re-running a transformer. Optimization is plain
mini-batch gradient descent so runs replay bit-identically across
platforms.

Selection is re-evaluated at every step because keys move during training;
each sample's candidate set stays fixed for the whole task.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gate import MaskDecision
from .pool import PromptExpert, PromptPool, candidate_set

__all__ = [
    "ClassifierHead",
    "TrainConfig",
    "modulate",
    "predict",
    "predict_many",
    "cross_entropy",
    "train_task",
    "training_loss",
]


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    key_match_weight: float = 0.5
    freeze_keys: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be > 0 (0 allowed for no-op runs)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.key_match_weight < 0:
            raise ValueError("key_match_weight must be >= 0")


class ClassifierHead:
    """Shared linear head; rows are appended lazily as new classes appear."""

    def __init__(self, dim: int):
        self.dim = dim
        self.class_ids: list[int] = []
        self.weights = np.zeros((0, dim))
        self.bias = np.zeros(0)
        self._row_of: dict[int, int] = {}

    @property
    def num_classes(self) -> int:
        return len(self.class_ids)

    def ensure_classes(self, labels) -> None:
        """Zero-init a row for every not-yet-known class id."""
        for c in np.unique(np.asarray(labels, dtype=np.int64)):
            c = int(c)
            if c not in self._row_of:
                self._row_of[c] = len(self.class_ids)
                self.class_ids.append(c)
                self.weights = np.vstack([self.weights, np.zeros((1, self.dim))])
                self.bias = np.append(self.bias, 0.0)

    def rows_for(self, labels) -> np.ndarray:
        try:
            return np.array([self._row_of[int(c)] for c in np.asarray(labels).ravel()],
                            dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"unknown class id {exc.args[0]}; extend the head first") from None

    def logits(self, z: np.ndarray) -> np.ndarray:
        return z @ self.weights.T + self.bias


def modulate(z, selected: list[PromptExpert]) -> np.ndarray:
    """Additive surrogate: z plus the mean over all selected prompt rows."""
    if not selected:
        raise ValueError("empty prompt selection")
    z = np.asarray(z, dtype=np.float64)
    rows = np.concatenate([e.params for e in selected])
    return z + rows.mean(axis=0)


def cross_entropy(logits, label: int) -> float:
    """Stabilized -log softmax(logits)[label]."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def _argmax_lowest_id(logits: np.ndarray, class_ids: np.ndarray) -> np.ndarray:
    """Row-wise argmax over logits; exact ties resolve to the lowest class id."""
    top = logits.max(axis=1, keepdims=True)
    tied = logits == top
    return np.where(tied, class_ids[None, :], np.iinfo(np.int64).max).min(axis=1)


def _select_batch(z: np.ndarray, keys: np.ndarray, cand: np.ndarray, k: int):
    """Vectorized top-K (cosine, ties by ascending id) under candidate masks.

    Returns (sel, valid, k_per_row, unit_z, unit_keys, key_norms); `sel` is
    (m, K') column indices, `valid` masks the rows where fewer than K
    candidates exist.
    """
    z_norms = np.linalg.norm(z, axis=1, keepdims=True)
    unit_z = z / z_norms
    key_norms = np.linalg.norm(keys, axis=1)
    unit_keys = keys / key_norms[:, None]
    scores = unit_z @ unit_keys.T
    masked = np.where(cand, scores, -np.inf)
    sel = np.argsort(-masked, axis=1, kind="stable")[:, :k]
    k_per_row = np.minimum(k, cand.sum(axis=1))
    valid = np.arange(sel.shape[1])[None, :] < k_per_row[:, None]
    return sel, valid, k_per_row, unit_z, unit_keys, key_norms


def _pooled_prompt(params: np.ndarray, sel, valid, k_per_row) -> np.ndarray:
    """Mean over all rows of the selected experts' params, per sample."""
    row_means = params.mean(axis=1)
    gathered = np.where(valid[:, :, None], row_means[sel], 0.0)
    return gathered.sum(axis=1) / k_per_row[:, None]


def predict_many(z, head: ClassifierHead, pool: PromptPool, k: int,
                 usage: np.ndarray | None = None) -> np.ndarray:
    """Task-id-free batch prediction over the full pool (no masking)."""
    if head.num_classes < 1:
        raise ValueError("head has no classes")
    if not pool.experts:
        raise ValueError("empty pool")
    z = np.asarray(z, dtype=np.float64)
    cand = np.ones((z.shape[0], len(pool.experts)), dtype=bool)
    params = np.stack([e.params for e in pool.experts])
    sel, valid, k_per_row, *_ = _select_batch(z, pool.keys_matrix(), cand, k)
    if usage is not None:
        np.add.at(usage, sel[valid], 1)
    z_mod = z + _pooled_prompt(params, sel, valid, k_per_row)
    class_ids = np.array(head.class_ids, dtype=np.int64)
    return _argmax_lowest_id(head.logits(z_mod), class_ids)


def predict(z, head: ClassifierHead, pool: PromptPool, k: int) -> int:
    return int(predict_many(np.asarray(z, dtype=np.float64).reshape(1, -1),
                            head, pool, k)[0])


def _batch_forward(z, label_rows, cand, params, keys, weights, bias, k,
                   key_match_weight):
    """Loss and intermediates for one mini-batch (mean over the batch)."""
    m = z.shape[0]
    sel, valid, k_per_row, unit_z, unit_keys, key_norms = _select_batch(
        z, keys, cand, k)
    z_mod = z + _pooled_prompt(params, sel, valid, k_per_row)
    logits = z_mod @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    log_probs = shifted - np.log(exp.sum(axis=1, keepdims=True))
    ce = -log_probs[np.arange(m), label_rows].mean()

    key_loss = 0.0
    if key_match_weight > 0:
        cos_sel = np.where(valid, (unit_z @ unit_keys.T)[
            np.arange(m)[:, None], sel], 0.0)
        key_loss = key_match_weight * float(
            ((valid.sum(axis=1) - cos_sel.sum(axis=1)) / k_per_row).mean())

    cache = (sel, valid, k_per_row, unit_z, unit_keys, key_norms, z_mod,
             exp / exp.sum(axis=1, keepdims=True))
    return float(ce) + key_loss, cache


def training_loss(z, label_rows, cand, params, keys, weights, bias, k,
                  key_match_weight) -> float:
    """The exact objective one trainer step descends (used by gradient checks)."""
    loss, _ = _batch_forward(np.asarray(z, dtype=np.float64), label_rows, cand,
                             params, keys, weights, bias, k, key_match_weight)
    return loss


def _batch_step(z, label_rows, cand, params, keys, weights, bias, k,
                config: TrainConfig, usage: np.ndarray) -> None:
    """One gradient-descent step; mutates params/keys/weights/bias in place.

    Only the head and the experts selected in this step are written, so
    unselected experts stay bit-identical.
    """
    m, prompt_len = z.shape[0], params.shape[1]
    _, cache = _batch_forward(z, label_rows, cand, params, keys, weights, bias,
                              k, 0.0 if config.freeze_keys else config.key_match_weight)
    sel, valid, k_per_row, unit_z, unit_keys, key_norms, z_mod, probs = cache

    grad_logits = probs.copy()
    grad_logits[np.arange(m), label_rows] -= 1.0
    grad_logits /= m
    grad_w = grad_logits.T @ z_mod
    grad_b = grad_logits.sum(axis=0)
    grad_z = grad_logits @ weights

    rows_i, cols_k = np.nonzero(valid)
    experts_hit = sel[rows_i, cols_k]
    touched = np.unique(experts_hit)
    np.add.at(usage, experts_hit, 1)

    per_row = grad_z / (k_per_row * prompt_len)[:, None]
    grad_prow = np.zeros_like(keys)
    np.add.at(grad_prow, experts_hit, per_row[rows_i])

    lr = config.learning_rate
    if lr == 0.0:
        return

    if config.key_match_weight > 0 and not config.freeze_keys:
        cos_vals = (unit_z[rows_i] * unit_keys[experts_hit]).sum(axis=1)
        coef = config.key_match_weight / (m * k_per_row[rows_i])
        dcos_dkey = (unit_z[rows_i] - cos_vals[:, None] * unit_keys[experts_hit]) \
            / key_norms[experts_hit][:, None]
        grad_keys = np.zeros_like(keys)
        np.add.at(grad_keys, experts_hit, -coef[:, None] * dcos_dkey)
        keys[touched] -= lr * grad_keys[touched]

    params[touched] -= lr * grad_prow[touched][:, None, :]
    weights -= lr * grad_w
    bias -= lr * grad_b


def train_task(features, labels, routing, pool: PromptPool, head: ClassifierHead,
               config: TrainConfig, current_task: int, top_k: int = 1,
               ) -> tuple[PromptPool, ClassifierHead, np.ndarray]:
    """Mini-batch empirical-risk minimization over one task's samples.

    `routing` fixes each sample's candidate experts for the whole task:
    either a list of MaskDecision aligned with the samples (adaptive policy)
    or one of the policy strings "global_pool" / "task_specific". Returns
    per-expert training-time selection counts alongside the updated pool
    and head.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("empty task data")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels are misaligned")

    col_of = {e.id: j for j, e in enumerate(pool.experts)}
    n_experts = len(pool.experts)
    cand = np.zeros((n, n_experts), dtype=bool)
    if isinstance(routing, str):
        cols = [col_of[i] for i in candidate_set(pool, routing, current_task)]
        cand[:, cols] = True
    else:
        if len(routing) != n:
            raise ValueError("masks must align 1:1 with task samples")
        cols_by_bit = {}
        for i, decision in enumerate(routing):
            bit = decision.bit if isinstance(decision, MaskDecision) else int(decision)
            if bit not in cols_by_bit:
                cols_by_bit[bit] = [col_of[j] for j in
                                    candidate_set(pool, bit, current_task)]
            cand[i, cols_by_bit[bit]] = True

    label_rows = head.rows_for(labels)
    params = np.stack([e.params for e in pool.experts])
    keys = pool.keys_matrix()
    usage = np.zeros(n_experts, dtype=np.int64)
    rng = np.random.default_rng([config.seed, current_task, 0x7EA1])

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            _batch_step(features[idx], label_rows[idx], cand[idx], params, keys,
                        head.weights, head.bias, top_k, config, usage)

    for j, expert in enumerate(pool.experts):
        expert.params = params[j]
        expert.key = keys[j]
    return pool, head, usage
