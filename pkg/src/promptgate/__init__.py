"""Similarity-aware prompt-pool routing for continual learning.

An incremental mixture-of-experts engine over frozen features: the prompt
pool grows a few orthogonally-initialized experts per task, and an online
Relative Mahalanobis Distance gate decides, per training sample, whether to
route it to established experts (familiar data) or to the task's fresh ones
(novel data). A simulation harness compares this adaptive policy against
global-pool and task-specific routing on synthetic and precomputed-embedding
task streams.
"""

__version__ = "0.1.0"

from . import data, gate, kernels, loop, metrics, model, pool, stats  # noqa: F401
from .loop import RoutingPolicy, RunConfig, RunResult, run_sequence  # noqa: F401
