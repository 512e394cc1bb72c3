"""Synthetic multitask retrieval suites and batch scheduling.

Each task owns a knowledge base of target feature rows drawn around cluster
prototypes; queries are noisy copies of their gold target's features. With
noise_scale 0 a query equals its gold row exactly, so an oracle encoder that
just normalizes features retrieves the gold at rank 1.

Batch sizes across tasks follow temperature-scaled mixing: B_k proportional
to N_k ** (1/temperature), rounded half to even and clamped to at least 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .encoder import TrainBatch

_CLUSTER_SPREAD = 0.5  # jitter of targets around their prototype, before row normalization


@dataclass(frozen=True)
class TaskSpec:
    """Generation recipe for a multitask suite."""

    num_tasks: int
    train_sizes: tuple[int, ...]
    val_sizes: tuple[int, ...]
    kb_size: int
    input_dim: int
    cluster_count: int
    noise_scale: float
    difficulty_scales: tuple[float, ...]
    shared_kb: bool = False

    def __post_init__(self):
        object.__setattr__(self, "train_sizes", tuple(int(n) for n in self.train_sizes))
        object.__setattr__(self, "val_sizes", tuple(int(n) for n in self.val_sizes))
        object.__setattr__(self, "difficulty_scales",
                           tuple(float(s) for s in self.difficulty_scales))
        k = self.num_tasks
        if k < 1:
            raise ValueError("num_tasks must be positive")
        if len(self.train_sizes) != k or len(self.val_sizes) != k:
            raise ValueError("train_sizes and val_sizes must have one entry per task")
        if len(self.difficulty_scales) != k:
            raise ValueError("difficulty_scales must have one entry per task")
        if min(self.train_sizes) < 1 or min(self.val_sizes) < 1:
            raise ValueError("split sizes must be positive")
        if self.kb_size < self.cluster_count:
            raise ValueError("kb_size must be at least cluster_count")
        if self.cluster_count < 1:
            raise ValueError("cluster_count must be positive")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")
        if min(self.difficulty_scales) <= 0:
            raise ValueError("difficulty scales must be positive")


@dataclass
class MultitaskDataset:
    """Generated suite: per-task query splits plus one KB per task (or one shared)."""

    spec: TaskSpec
    train_queries: list[np.ndarray]
    train_golds: list[np.ndarray]
    val_queries: list[np.ndarray]
    val_golds: list[np.ndarray]
    kbs: list[np.ndarray]
    task_to_kb: np.ndarray

    @property
    def num_tasks(self) -> int:
        return self.spec.num_tasks

    def kb_for_task(self, task: int) -> np.ndarray:
        return self.kbs[int(self.task_to_kb[task])]


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate_tasks(spec: TaskSpec, seed: int) -> MultitaskDataset:
    """Sample a suite deterministically from (spec, seed)."""
    rng = np.random.default_rng(seed)
    num_kbs = 1 if spec.shared_kb else spec.num_tasks
    kbs = []
    for _ in range(num_kbs):
        protos = _unit_rows(rng.standard_normal((spec.cluster_count, spec.input_dim)))
        assign = np.arange(spec.kb_size) % spec.cluster_count
        kb = protos[assign] + _CLUSTER_SPREAD * rng.standard_normal(
            (spec.kb_size, spec.input_dim))
        kbs.append(_unit_rows(kb))
    task_to_kb = np.zeros(spec.num_tasks, dtype=np.int64) if spec.shared_kb \
        else np.arange(spec.num_tasks, dtype=np.int64)

    train_q, train_g, val_q, val_g = [], [], [], []
    for k in range(spec.num_tasks):
        kb = kbs[int(task_to_kb[k])]
        sigma = spec.noise_scale * spec.difficulty_scales[k]
        for queries, golds, n in ((train_q, train_g, spec.train_sizes[k]),
                                  (val_q, val_g, spec.val_sizes[k])):
            g = rng.integers(0, kb.shape[0], size=n)
            q = kb[g] + sigma * rng.standard_normal((n, spec.input_dim))
            queries.append(q)
            golds.append(g)
    return MultitaskDataset(spec, train_q, train_g, val_q, val_g, kbs, task_to_kb)


def mixing_batch_sizes(sizes, temperature: float, total: int) -> np.ndarray:
    """Per-task batch sizes B_k = round(total * N_k^(1/t) / sum), min 1.

    Rounding is half-to-even and leftovers are not redistributed, so the sum
    can differ from `total` by a little.
    """
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.ndim != 1 or sizes.size < 1:
        raise ValueError("sizes must be a nonempty vector")
    if np.any(sizes < 1):
        raise ValueError("task sizes must be at least 1")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if total < sizes.size:
        raise ValueError("total batch size must be at least one per task")
    w = sizes ** (1.0 / temperature)
    b = np.round(total * w / w.sum()).astype(np.int64)
    return np.maximum(b, 1)


class _TaskCursor:
    """Shuffled index stream for one task.

    One pass over the permutation is the task's own epoch: ceil(n/b) batches,
    the last possibly short. When the scheduler keeps asking past that, the
    cursor reshuffles and cycles.
    """

    def __init__(self, n: int, b: int):
        self.n = int(n)
        self.b = int(b)
        self.perm = None
        self.pos = 0

    def next_indices(self, rng) -> np.ndarray:
        if self.perm is None or self.pos >= self.n:
            self.perm = rng.permutation(self.n)
            self.pos = 0
        take = min(self.b, self.n - self.pos)
        idx = self.perm[self.pos:self.pos + take]
        self.pos += take
        return idx


@dataclass
class BatchSchedule:
    """Round-robin multitask batch iterator state."""

    batch_sizes: np.ndarray
    steps_per_epoch: int
    cursors: list[_TaskCursor]

    @property
    def total_batch(self) -> int:
        return int(self.batch_sizes.sum())


def make_schedule(train_sizes, batch_sizes) -> BatchSchedule:
    train_sizes = np.asarray(train_sizes, dtype=np.int64)
    batch_sizes = np.asarray(batch_sizes, dtype=np.int64)
    if train_sizes.shape != batch_sizes.shape:
        raise ValueError("one batch size per task required")
    if np.any(batch_sizes < 1):
        raise ValueError("batch sizes must be positive")
    steps = int(np.max(np.ceil(train_sizes / batch_sizes)))
    cursors = [_TaskCursor(n, b) for n, b in zip(train_sizes, batch_sizes)]
    return BatchSchedule(batch_sizes, steps, cursors)


def next_step_batches(schedule: BatchSchedule, dataset: MultitaskDataset,
                      negatives: list[np.ndarray], rng) -> list[TrainBatch]:
    """Assemble one training step: one batch per task, all tasks every step."""
    batches = []
    for k, cursor in enumerate(schedule.cursors):
        idx = cursor.next_indices(rng)
        golds = dataset.train_golds[k][idx]
        batches.append(TrainBatch(
            task_id=k,
            query_features=dataset.train_queries[k][idx],
            gold_ids=golds,
            hard_negative_ids=negatives[k][idx],
            target_features=dataset.kb_for_task(k),
        ))
    return batches


# --- bundle io ---------------------------------------------------------------
#
# A dataset bundle is a .npz archive with integer id columns and float64
# feature matrices:
#   meta_json            utf-8 JSON echo of the TaskSpec
#   task_to_kb           (K,) int
#   kb_{j}               (kb_size, input_dim) float
#   train_queries_{k}, train_golds_{k}, val_queries_{k}, val_golds_{k}


def save_dataset(dataset: MultitaskDataset, path) -> None:
    arrays = {
        "meta_json": np.frombuffer(
            json.dumps(dataset.spec.__dict__, sort_keys=True).encode(), dtype=np.uint8),
        "task_to_kb": dataset.task_to_kb,
    }
    for j, kb in enumerate(dataset.kbs):
        arrays[f"kb_{j}"] = kb
    for k in range(dataset.num_tasks):
        arrays[f"train_queries_{k}"] = dataset.train_queries[k]
        arrays[f"train_golds_{k}"] = dataset.train_golds[k]
        arrays[f"val_queries_{k}"] = dataset.val_queries[k]
        arrays[f"val_golds_{k}"] = dataset.val_golds[k]
    np.savez(path, **arrays)


def load_dataset(path) -> MultitaskDataset:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta_json"]).decode())
        meta["train_sizes"] = tuple(meta["train_sizes"])
        meta["val_sizes"] = tuple(meta["val_sizes"])
        meta["difficulty_scales"] = tuple(meta["difficulty_scales"])
        spec = TaskSpec(**meta)
        task_to_kb = z["task_to_kb"]
        kbs = [z[f"kb_{j}"] for j in range(int(task_to_kb.max()) + 1)]
        train_q = [z[f"train_queries_{k}"] for k in range(spec.num_tasks)]
        train_g = [z[f"train_golds_{k}"] for k in range(spec.num_tasks)]
        val_q = [z[f"val_queries_{k}"] for k in range(spec.num_tasks)]
        val_g = [z[f"val_golds_{k}"] for k in range(spec.num_tasks)]
    return MultitaskDataset(spec, train_q, train_g, val_q, val_g, kbs, task_to_kb)
