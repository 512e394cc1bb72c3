"""Baseline multitask gradient combiners and base optimizers.

Combiners map a (d, K) matrix of per-task gradient columns to a single update
direction. The base optimizers (Adam, plain SGD) consume whatever a combiner
produces and share one learning rate schedule: linear ramp from 0 to the peak
over the warmup span, then linear decay back to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

_WEIGHT_FLOOR = 1e-8  # keeps gradnorm weights positive before renormalizing


def naive_combine(grads, weights) -> np.ndarray:
    """Fixed-weight combination sum_k weights[k] * G[:, k]."""
    grads = np.asarray(grads, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (grads.shape[1],):
        raise ValueError("one weight per task required")
    # same reduction path as the adaptive combiner, so uniform weights match it exactly
    return (grads * weights).sum(axis=1)


def _project_away_conflict(g_i, g_j):
    """Remove from g_i its conflicting component along g_j (if any)."""
    dot = g_i @ g_j
    if dot < 0.0:
        denom = g_j @ g_j
        if denom > 0.0:
            g_i = g_i - (dot / denom) * g_j
    return g_i


def pcgrad_combine(grads, rng) -> np.ndarray:
    """Gradient surgery: project each task's gradient off conflicting peers.

    Each column is projected against the other original columns in a fresh
    random order, then the surgered columns are averaged.
    """
    grads = np.asarray(grads, dtype=np.float64)
    d, k = grads.shape
    out = np.zeros(d)
    for i in range(k):
        g_i = grads[:, i].copy()
        for j in rng.permutation(k):
            if j != i:
                g_i = _project_away_conflict(g_i, grads[:, j])
        out += g_i
    return out / k


def cgd_combine(grads, agreement_power: float = 2.0) -> np.ndarray:
    """Agreement-weighted combination.

    Tasks are weighted by how well their gradient agrees with the mean
    direction: alpha_k proportional to max(0, cos(G_k, mean))^power. If no
    task agrees (or the mean vanishes) the weights fall back to uniform.
    """
    grads = np.asarray(grads, dtype=np.float64)
    k = grads.shape[1]
    mean = grads.mean(axis=1)
    mean_norm = np.linalg.norm(mean)
    col_norms = np.linalg.norm(grads, axis=0)
    if mean_norm == 0.0:
        alpha = np.full(k, 1.0 / k)
    else:
        denom = np.where(col_norms > 0.0, col_norms * mean_norm, 1.0)
        cos = np.where(col_norms > 0.0, grads.T @ mean / denom, 0.0)
        a = np.maximum(cos, 0.0) ** agreement_power
        alpha = a / a.sum() if a.sum() > 0.0 else np.full(k, 1.0 / k)
    return grads @ alpha


@dataclass
class GradNormState:
    """Task loss weights learned to balance per-task training rates."""

    weights: np.ndarray
    initial_losses: np.ndarray | None
    alpha: float = 1.5
    inner_lr: float = 0.025


def gradnorm_init(num_tasks: int, alpha: float = 1.5, inner_lr: float = 0.025) -> GradNormState:
    return GradNormState(np.ones(num_tasks), None, alpha, inner_lr)


def gradnorm_update(state: GradNormState, losses, grad_norms) -> GradNormState:
    """One inner step on the weights; they are renormalized to sum to K.

    The first call records its losses as the training-rate reference L_k(0).
    """
    losses = np.asarray(losses, dtype=np.float64)
    grad_norms = np.asarray(grad_norms, dtype=np.float64)
    k = state.weights.size
    if losses.shape != (k,) or grad_norms.shape != (k,):
        raise ValueError("losses and grad_norms must have one entry per task")
    if state.initial_losses is None:
        state = replace(state, initial_losses=losses.copy())
    if np.any(state.initial_losses == 0.0):
        raise ValueError("initial task loss of zero makes training rates undefined")

    weighted = state.weights * grad_norms
    target_mean = weighted.mean()
    ratios = losses / state.initial_losses
    rel_rate = ratios / ratios.mean()
    targets = target_mean * rel_rate ** state.alpha  # treated as constants
    grad_w = np.sign(weighted - targets) * grad_norms
    w = state.weights - state.inner_lr * grad_w
    w = np.maximum(w, _WEIGHT_FLOOR)
    w = w * (k / w.sum())
    return replace(state, weights=w)


def lr_at(step: int, total: int, peak: float, warmup_fraction: float) -> float:
    """Linear warmup to the peak, then linear decay to zero at step == total."""
    if total < 1:
        raise ValueError("total steps must be positive")
    if not 0 <= step <= total:
        raise ValueError("step must lie in [0, total]")
    if not 0.0 <= warmup_fraction < 1.0:
        raise ValueError("warmup_fraction must lie in [0, 1)")
    warmup_steps = min(round(warmup_fraction * total), total - 1)
    if step < warmup_steps:
        return peak * step / warmup_steps
    return peak * (total - step) / (total - warmup_steps)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int
    peak_lr: float
    total_steps: int
    warmup_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(d: int, peak_lr: float, total_steps: int, warmup_fraction: float = 0.1,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(np.zeros(d), np.zeros(d), 0, peak_lr, total_steps,
                     warmup_fraction, beta1, beta2, eps)


def adam_step(state: AdamState, grad, params):
    """Bias-corrected Adam step under the shared lr schedule."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite gradient")
    lr = lr_at(state.step, state.total_steps, state.peak_lr, state.warmup_fraction)
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, replace(state, m=m, v=v, step=t)


@dataclass
class SgdState:
    step: int
    peak_lr: float
    total_steps: int
    warmup_fraction: float = 0.1


def sgd_init(peak_lr: float, total_steps: int, warmup_fraction: float = 0.1) -> SgdState:
    return SgdState(0, peak_lr, total_steps, warmup_fraction)


def sgd_step(state: SgdState, grad, params):
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        raise FloatingPointError("non-finite gradient")
    lr = lr_at(state.step, state.total_steps, state.peak_lr, state.warmup_fraction)
    params = params - lr * grad
    return params, replace(state, step=state.step + 1)


class Adam:
    """Stateful wrapper so training loops can call step(params, grad)."""

    def __init__(self, d: int, peak_lr: float, total_steps: int,
                 warmup_fraction: float = 0.1, **kwargs):
        self.state = adam_init(d, peak_lr, total_steps, warmup_fraction, **kwargs)

    def step(self, params, grad):
        params, self.state = adam_step(self.state, grad, params)
        return params


class Sgd:
    def __init__(self, d: int, peak_lr: float, total_steps: int, warmup_fraction: float = 0.1):
        self.state = sgd_init(peak_lr, total_steps, warmup_fraction)

    def step(self, params, grad):
        params, self.state = sgd_step(self.state, grad, params)
        return params


def make_base_optimizer(kind: str, d: int, peak_lr: float, total_steps: int,
                        warmup_fraction: float = 0.1):
    if kind == "adam":
        return Adam(d, peak_lr, total_steps, warmup_fraction)
    if kind == "sgd":
        return Sgd(d, peak_lr, total_steps, warmup_fraction)
    raise ValueError(f"unknown base optimizer {kind!r}")
