"""Shared-weight feed-forward dual encoder with task-conditioned query inputs.

Queries and targets run through the same MLP. A query's raw features are
prefixed with a task indicator block (one-hot over tasks or task types);
targets always get a zero block, so target embeddings are task independent
and can be computed once per knowledge base.

Parameters live in a single flat float64 vector so optimizers and the
sensitivity machinery can treat the model as one coordinate array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PREFIX_MODES = ("task_id", "task_type_id", "none")


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the dual encoder.

    task_types maps task id -> task type id for the task_type_id prefix mode;
    it defaults to the identity map, which makes the two modes coincide.
    """

    input_dim: int
    embed_dim: int
    hidden_dims: tuple[int, ...] = ()
    num_tasks: int = 1
    prefix_mode: str = "task_id"
    task_types: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.task_types is not None:
            object.__setattr__(self, "task_types", tuple(int(t) for t in self.task_types))
        if self.input_dim < 1 or self.embed_dim < 1:
            raise ValueError("input_dim and embed_dim must be positive")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden dims must be positive")
        if self.num_tasks < 1:
            raise ValueError("num_tasks must be positive")
        if self.prefix_mode not in PREFIX_MODES:
            raise ValueError(f"prefix_mode must be one of {PREFIX_MODES}")
        if self.task_types is not None:
            if len(self.task_types) != self.num_tasks:
                raise ValueError("task_types must have one entry per task")
            if any(t < 0 for t in self.task_types):
                raise ValueError("task type ids must be nonnegative")

    @property
    def prefix_dim(self) -> int:
        if self.prefix_mode == "none":
            return 0
        if self.prefix_mode == "task_id":
            return self.num_tasks
        types = self.task_types or tuple(range(self.num_tasks))
        return max(types) + 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = [self.input_dim + self.prefix_dim, *self.hidden_dims, self.embed_dim]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())

    def prefix_block(self, task: int | None) -> np.ndarray:
        """Indicator block prepended to raw features; zeros for targets."""
        block = np.zeros(self.prefix_dim)
        if task is None:
            return block
        if not 0 <= task < self.num_tasks:
            raise ValueError(f"task id {task} out of range [0, {self.num_tasks})")
        if self.prefix_mode == "task_id":
            block[task] = 1.0
        elif self.prefix_mode == "task_type_id":
            types = self.task_types or tuple(range(self.num_tasks))
            block[types[task]] = 1.0
        return block


def init_params(config: EncoderConfig, seed: int) -> np.ndarray:
    """Flat parameter vector: weights ~ N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    parts = []
    for fan_in, fan_out in config.layer_shapes():
        w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
        parts.append(w.ravel())
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def unpack_params(config: EncoderConfig, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer (W, b) pairs."""
    if params.shape != (config.param_count(),):
        raise ValueError(f"expected {config.param_count()} parameters, got {params.shape}")
    pairs = []
    off = 0
    for fan_in, fan_out in config.layer_shapes():
        w = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        pairs.append((w, b))
    return pairs


def _forward(config, params, x):
    """Batched forward pass. x already carries the prefix block."""
    layers = unpack_params(config, params)
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
    return h


def _forward_cached(config, params, x):
    """Forward pass keeping each layer's input for backprop."""
    layers = unpack_params(config, params)
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def _backward(config, params, acts, d_out, grad_accum):
    """Accumulate d(loss)/d(params) into grad_accum given d(loss)/d(embeddings)."""
    layers = unpack_params(config, params)
    offsets = []
    off = 0
    for fan_in, fan_out in config.layer_shapes():
        offsets.append((off, fan_in, fan_out))
        off += fan_in * fan_out + fan_out
    dz = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a_in = acts[i]
        start, fan_in, fan_out = offsets[i]
        grad_accum[start:start + fan_in * fan_out] += (a_in.T @ dz).ravel()
        grad_accum[start + fan_in * fan_out:start + fan_in * fan_out + fan_out] += dz.sum(axis=0)
        if i > 0:
            da = dz @ w.T
            # acts[i] stores tanh output for hidden layers
            dz = da * (1.0 - acts[i] ** 2)
    return grad_accum


def _with_prefix(config, features, task):
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != config.input_dim:
        raise ValueError(f"feature length {features.shape[1]} != input_dim {config.input_dim}")
    if config.prefix_dim == 0:
        return features
    block = np.broadcast_to(config.prefix_block(task), (features.shape[0], config.prefix_dim))
    return np.concatenate([block, features], axis=1)


def encode_queries(params, features, task, config: EncoderConfig) -> np.ndarray:
    """Embed a matrix of query feature rows for one task."""
    if config.prefix_mode != "none" and task is None:
        raise ValueError("query encoding needs a task id when a prefix mode is set")
    return _forward(config, params, _with_prefix(config, features, task))


def encode_targets(params, features, config: EncoderConfig) -> np.ndarray:
    """Embed target rows; the prefix block is zero, so no task is involved."""
    return _forward(config, params, _with_prefix(config, features, None))


def encode(params, features, task, config: EncoderConfig) -> np.ndarray:
    """Embed a single query (task given) or target (task None)."""
    x = _with_prefix(config, np.asarray(features, dtype=np.float64)[None, :], task)
    return _forward(config, params, x)[0]


def score(query_emb, target_emb) -> float:
    """Relevance score: plain inner product."""
    q = np.asarray(query_emb, dtype=np.float64)
    t = np.asarray(target_emb, dtype=np.float64)
    if q.shape != t.shape:
        raise ValueError("embedding shapes differ")
    return float(q @ t)


@dataclass
class TrainBatch:
    """One task's training batch.

    target_features maps target id -> feature row (the task's whole KB), so
    gold and hard-negative ids index into it directly.
    """

    task_id: int
    query_features: np.ndarray
    gold_ids: np.ndarray
    hard_negative_ids: np.ndarray
    target_features: np.ndarray

    def __post_init__(self):
        self.query_features = np.asarray(self.query_features, dtype=np.float64)
        self.gold_ids = np.asarray(self.gold_ids, dtype=np.int64)
        self.hard_negative_ids = np.asarray(self.hard_negative_ids, dtype=np.int64)
        b = self.query_features.shape[0]
        if b < 1:
            raise ValueError("batch must contain at least one query")
        if self.gold_ids.shape != (b,):
            raise ValueError("gold_ids must align with query rows")
        if self.hard_negative_ids.ndim != 2 or self.hard_negative_ids.shape[0] != b:
            raise ValueError("hard_negative_ids must be (batch, n_neg)")
        n = self.target_features.shape[0]
        ids = np.concatenate([self.gold_ids, self.hard_negative_ids.ravel()])
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise ValueError("target id out of range")
        if np.any(self.hard_negative_ids == self.gold_ids[:, None]):
            raise ValueError("a query's gold id appears among its own hard negatives")

    @property
    def size(self) -> int:
        return self.query_features.shape[0]


def _nce_parts(params, batch: TrainBatch, config: EncoderConfig):
    """Shared forward machinery for the loss and its gradient.

    Per query i the candidate pool is the union of all in-batch gold ids and
    query i's own hard negatives, deduplicated. Returns cached activations so
    the gradient can reuse the forward pass.
    """
    cand = np.unique(np.concatenate([batch.gold_ids, batch.hard_negative_ids.ravel()]))
    xq = _with_prefix(config, batch.query_features, batch.task_id)
    xt = _with_prefix(config, batch.target_features[cand], None)
    q_emb, q_acts = _forward_cached(config, params, xq)
    t_emb, t_acts = _forward_cached(config, params, xt)
    scores = q_emb @ t_emb.T
    if not np.isfinite(scores).all():
        raise FloatingPointError("non-finite candidate scores")

    b = batch.size
    gold_col = np.searchsorted(cand, batch.gold_ids)
    neg_col = np.searchsorted(cand, batch.hard_negative_ids)
    mask = np.zeros((b, cand.size), dtype=bool)
    mask[:, gold_col] = True  # every in-batch gold is a candidate for every row
    mask[np.arange(b)[:, None], neg_col] = True

    z = np.where(mask, scores, -np.inf)
    m = z.max(axis=1, keepdims=True)
    expz = np.exp(z - m)
    lse = m[:, 0] + np.log(expz.sum(axis=1))
    losses = lse - z[np.arange(b), gold_col]
    return q_emb, q_acts, t_emb, t_acts, expz, lse, m, gold_col, losses


def nce_loss(params, batch: TrainBatch, config: EncoderConfig) -> float:
    """Mean contrastive loss: -log softmax(gold) over the candidate pool."""
    losses = _nce_parts(params, batch, config)[-1]
    return float(losses.mean())


def nce_loss_and_gradient(params, batch: TrainBatch, config: EncoderConfig):
    """Loss plus its analytic gradient as one flat vector."""
    q_emb, q_acts, t_emb, t_acts, expz, lse, m, gold_col, losses = _nce_parts(
        params, batch, config)
    b = batch.size
    probs = expz * np.exp(m - lse[:, None])  # zeros where masked
    dlogits = probs
    dlogits[np.arange(b), gold_col] -= 1.0
    dlogits /= b

    grad = np.zeros_like(params)
    _backward(config, params, q_acts, dlogits @ t_emb, grad)
    _backward(config, params, t_acts, dlogits.T @ q_emb, grad)
    return float(losses.mean()), grad


def nce_gradient(params, batch: TrainBatch, config: EncoderConfig) -> np.ndarray:
    return nce_loss_and_gradient(params, batch, config)[1]
