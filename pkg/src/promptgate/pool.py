"""Growing prompt pool: orthogonal expert creation and cosine top-K routing.

Keys live in feature space, so at most d experts can hold mutually
orthogonal keys; growth past that point fails loudly rather than silently
relaxing the orthogonality guarantee. Prompt parameter rows are
orthogonalized against all existing rows while the dimension allows it and
fall back to small random init afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gate import MaskDecision

__all__ = [
    "PromptExpert",
    "PromptPool",
    "grow",
    "query_score",
    "candidate_set",
    "select_top_k",
]

PARAM_INIT_SCALE = 0.02


@dataclass
class PromptExpert:
    id: int
    key: np.ndarray          # (d,)
    params: np.ndarray       # (L_p, d)
    birth_task: int


@dataclass
class PromptPool:
    dim: int
    prompt_len: int
    experts: list[PromptExpert] = field(default_factory=list)
    growth_log: list[tuple[int, list[int]]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.experts)

    def keys_matrix(self) -> np.ndarray:
        return np.stack([e.key for e in self.experts])

    def birth_tasks(self) -> np.ndarray:
        return np.array([e.birth_task for e in self.experts], dtype=np.int64)


def _orthonormal_basis(rows: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Columns spanning the row space of `rows`; (d, rank)."""
    d = rows.shape[1] if rows.ndim == 2 else rows.shape[0]
    if rows.size == 0:
        return np.zeros((d, 0))
    norms = np.linalg.norm(rows, axis=1)
    rows = rows[norms > tol]
    if rows.shape[0] == 0:
        return np.zeros((d, 0))
    q, r = np.linalg.qr(rows.T)
    keep = np.abs(np.diag(r)) > tol
    return q[:, keep]


def _draw_orthogonal_unit(rng: np.random.Generator, basis: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to every basis column (re-orthogonalized twice)."""
    d = basis.shape[0]
    for _ in range(64):
        v = rng.standard_normal(d)
        for _ in range(2):
            if basis.shape[1]:
                v = v - basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    raise ValueError("could not draw a vector orthogonal to the existing set")


def grow(pool: PromptPool, k_new: int, task: int, rng_seed: int) -> PromptPool:
    """Append k_new orthogonally-initialized experts born at `task`."""
    if k_new < 1:
        raise ValueError("k_new must be >= 1")
    d = pool.dim
    if len(pool.experts) + k_new > d:
        raise ValueError(
            f"cannot grow: {len(pool.experts)} existing keys + {k_new} new ones "
            f"exceed the feature dimension d={d}; increase d or lower k_new"
        )
    rng = np.random.default_rng([int(rng_seed), int(task), len(pool.experts)])

    key_basis = _orthonormal_basis(pool.keys_matrix() if pool.experts
                                   else np.zeros((0, d)))
    all_rows = (np.concatenate([e.params for e in pool.experts])
                if pool.experts else np.zeros((0, d)))
    row_basis = _orthonormal_basis(all_rows)

    next_id = pool.experts[-1].id + 1 if pool.experts else 0
    created: list[int] = []
    for _ in range(k_new):
        key = _draw_orthogonal_unit(rng, key_basis)
        key_basis = np.column_stack([key_basis, key])

        rows = np.empty((pool.prompt_len, d))
        for r in range(pool.prompt_len):
            if row_basis.shape[1] < d:
                direction = _draw_orthogonal_unit(rng, row_basis)
                row_basis = np.column_stack([row_basis, direction])
                rows[r] = PARAM_INIT_SCALE * direction
            else:
                rows[r] = PARAM_INIT_SCALE * rng.standard_normal(d)

        pool.experts.append(PromptExpert(id=next_id, key=key, params=rows,
                                         birth_task=task))
        created.append(next_id)
        next_id += 1

    pool.growth_log.append((task, created))
    return pool


def query_score(z, key) -> float:
    """Cosine similarity between an input embedding and a prompt key."""
    z = np.asarray(z, dtype=np.float64)
    key = np.asarray(key, dtype=np.float64)
    if z.shape != key.shape:
        raise ValueError(f"dimension mismatch: z {z.shape} vs key {key.shape}")
    nz, nk = np.linalg.norm(z), np.linalg.norm(key)
    if nz == 0.0 or nk == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(z @ key / (nz * nk))


def candidate_set(pool: PromptPool, decision, current_task: int) -> set[int]:
    """Expert ids an input may route to.

    `decision` is a MaskDecision (or bare bit) under the adaptive policy,
    or one of the policy strings "global_pool" / "task_specific".
    """
    if not pool.experts:
        raise ValueError("empty pool")
    if decision == "global_pool":
        return {e.id for e in pool.experts}
    if decision == "task_specific":
        return {e.id for e in pool.experts if e.birth_task == current_task}
    bit = decision.bit if isinstance(decision, MaskDecision) else int(decision)
    if bit == 1:
        return {e.id for e in pool.experts if e.birth_task == current_task}
    old = {e.id for e in pool.experts if e.birth_task < current_task}
    if not old:
        raise ValueError("mask bit 0 with no prior experts; cold-start rule "
                         "should have forced bit 1")
    return old


def select_top_k(z, pool: PromptPool, candidates: set[int], k: int) -> list[int]:
    """Top-K candidate ids by cosine score, ties broken by ascending id."""
    if k < 1:
        raise ValueError("K must be >= 1")
    if not candidates:
        raise ValueError("empty candidate set")
    by_id = {e.id: e for e in pool.experts}
    scored = sorted(
        ((-query_score(z, by_id[i].key), i) for i in candidates),
    )
    return [i for _, i in scored[: min(k, len(scored))]]
