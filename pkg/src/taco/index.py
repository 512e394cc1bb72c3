"""Exact inner-product search over target embeddings, plus negative mining.

Brute force on purpose: scores are a single matmul and ranking is a stable
sort, so results are exactly reproducible and ties always break toward the
lower target id. Episodic training rebuilds the index from the latest
parameters before each mining pass; the first pass (before any training
signal exists) uses uniform random non-gold negatives instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderConfig, encode_queries, encode_targets


@dataclass
class EmbeddingIndex:
    """Frozen snapshot of all target embeddings for one KB."""

    target_embeddings: np.ndarray
    target_ids: np.ndarray
    snapshot_step: int = 0

    def __post_init__(self):
        if self.target_embeddings.ndim != 2:
            raise ValueError("target_embeddings must be (num_targets, embed_dim)")
        if self.target_ids.shape != (self.target_embeddings.shape[0],):
            raise ValueError("one id per embedding row required")

    @property
    def size(self) -> int:
        return self.target_embeddings.shape[0]


def build_index(params, kb_features, config: EncoderConfig, snapshot_step: int = 0) -> EmbeddingIndex:
    emb = encode_targets(params, kb_features, config)
    return EmbeddingIndex(emb, np.arange(emb.shape[0], dtype=np.int64), snapshot_step)


def search(index: EmbeddingIndex, query_emb, k: int) -> np.ndarray:
    """Top-k target ids by descending score, ties by ascending id."""
    if not 1 <= k <= index.size:
        raise ValueError(f"k must be in [1, {index.size}]")
    scores = index.target_embeddings @ np.asarray(query_emb, dtype=np.float64)
    order = np.lexsort((index.target_ids, -scores))
    return index.target_ids[order[:k]]


def search_batch(index: EmbeddingIndex, query_embs, k: int) -> np.ndarray:
    """Row-wise top-k ids for a matrix of query embeddings."""
    if not 1 <= k <= index.size:
        raise ValueError(f"k must be in [1, {index.size}]")
    scores = np.asarray(query_embs, dtype=np.float64) @ index.target_embeddings.T
    # ids are ascending, so a stable sort on -score breaks ties toward lower id
    order = np.argsort(-scores, axis=1, kind="stable")
    return index.target_ids[order[:, :k]]


def mine_hard_negatives(index: EmbeddingIndex, params, queries, golds, n_neg: int,
                        config: EncoderConfig, task: int | None = None) -> np.ndarray:
    """Top-scoring n_neg non-gold target ids per query, from the index snapshot."""
    if n_neg < 1:
        raise ValueError("n_neg must be positive")
    if index.size < n_neg + 1:
        raise ValueError("KB too small: need at least n_neg + 1 targets")
    golds = np.asarray(golds, dtype=np.int64)
    q_emb = encode_queries(params, queries, task, config)
    scores = q_emb @ index.target_embeddings.T
    scores[np.arange(golds.size), golds] = -np.inf
    order = np.argsort(-scores, axis=1, kind="stable")
    return index.target_ids[order[:, :n_neg]]


def random_negatives(rng, kb_size: int, golds, n_neg: int) -> np.ndarray:
    """Uniform non-gold ids, used before the first index exists."""
    if kb_size < n_neg + 1:
        raise ValueError("KB too small: need at least n_neg + 1 targets")
    golds = np.asarray(golds, dtype=np.int64)
    draws = rng.integers(0, kb_size - 1, size=(golds.size, n_neg))
    return draws + (draws >= golds[:, None])


def refresh_schedule(episode: int) -> str:
    """Negative source for an episode: warmup draws random, the rest mine."""
    if episode < 0:
        raise ValueError("episode must be nonnegative")
    return "random" if episode == 0 else "mined"


def save_index(index: EmbeddingIndex, path) -> None:
    np.savez(path, target_embeddings=index.target_embeddings,
             target_ids=index.target_ids,
             snapshot_step=np.int64(index.snapshot_step))


def load_index(path) -> EmbeddingIndex:
    with np.load(path) as z:
        return EmbeddingIndex(z["target_embeddings"], z["target_ids"],
                              int(z["snapshot_step"]))
