"""Per-parameter task sensitivity and the adaptive gradient combiner.

The sensitivity of parameter i to task k is |g_{i,k} * theta_i|, a first-order
estimate of how much task k's loss would change if the parameter were zeroed.
Raw sensitivities are column-normalized by their task median (the raw values
are heavy tailed), amortized with momentum, and turned into a per-parameter
distribution over tasks by a temperature softmax. The combined update is then

    combined_i = sum_k U[i, k] * G[i, k]

where U is the row-stochastic weight matrix. Low temperature concentrates each
parameter on its most sensitive task; high temperature recovers the uniform
1/K average; negative temperature inverts the preference (an ablation knob).
During an initial burn-in span U is kept uniform while the sensitivity
statistics accumulate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .encoder import nce_loss_and_gradient


@dataclass
class SensitivityState:
    """Amortized sensitivity statistics plus the combiner's knobs.

    sigma_bar is (d, K): momentum-averaged, median-normalized sensitivities.
    step counts completed combiner steps; total_steps is the planned length of
    the adaptive span, which the burn-in fraction is measured against.
    """

    sigma_bar: np.ndarray
    beta: float
    tau: float
    burn_in_fraction: float
    step: int
    total_steps: int
    median_epsilon: float = 1e-12

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.tau == 0.0:
            raise ValueError("tau must be nonzero")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.total_steps < 1:
            raise ValueError("total_steps must be positive")
        if self.median_epsilon <= 0:
            raise ValueError("median_epsilon must be positive")

    @classmethod
    def fresh(cls, d: int, num_tasks: int, beta: float, tau: float,
              burn_in_fraction: float, total_steps: int,
              median_epsilon: float = 1e-12) -> "SensitivityState":
        return cls(np.zeros((d, num_tasks)), beta, tau, burn_in_fraction,
                   0, total_steps, median_epsilon)

    @property
    def in_burn_in(self) -> bool:
        return self.step < self.burn_in_fraction * self.total_steps

    @property
    def num_tasks(self) -> int:
        return self.sigma_bar.shape[1]


def raw_sensitivity(grad_col, params) -> np.ndarray:
    """|gradient * parameter| for one task's gradient column."""
    return np.abs(np.asarray(grad_col) * np.asarray(params))


def sensitivity_matrix(grads, params) -> np.ndarray:
    """Raw sensitivities for a (d, K) gradient matrix."""
    return np.abs(np.asarray(grads) * np.asarray(params)[:, None])


def normalize_by_median(raw, median_epsilon: float = 1e-12) -> np.ndarray:
    """Divide every task column by its median (guarded against zero medians)."""
    raw = np.asarray(raw, dtype=np.float64)
    med = np.median(raw, axis=0)
    return raw / np.maximum(med, median_epsilon)


def update_momentum(state: SensitivityState, normalized) -> SensitivityState:
    """sigma_bar <- beta * sigma_bar + (1 - beta) * normalized."""
    sb = state.beta * state.sigma_bar + (1.0 - state.beta) * np.asarray(normalized)
    return replace(state, sigma_bar=sb)


def row_softmax(matrix, tau: float) -> np.ndarray:
    """Row-wise softmax of matrix / tau, max-subtracted for stability."""
    if tau == 0.0:
        raise ValueError("tau must be nonzero")
    z = np.asarray(matrix, dtype=np.float64) / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def task_distribution(sigma_bar_row, tau: float) -> np.ndarray:
    """Per-parameter distribution over tasks: softmax(sigma_bar_row / tau)."""
    return row_softmax(np.asarray(sigma_bar_row, dtype=np.float64)[None, :], tau)[0]


def task_weight_matrix(state: SensitivityState) -> np.ndarray:
    """The combiner's U: uniform rows during burn-in, softmax rows after."""
    d, k = state.sigma_bar.shape
    if state.in_burn_in:
        return np.full((d, k), 1.0 / k)
    return row_softmax(state.sigma_bar, state.tau)


def adaptive_combine(grads, state: SensitivityState) -> np.ndarray:
    """Collapse the (d, K) gradient matrix to one update direction via U."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.sigma_bar.shape:
        raise ValueError("gradient matrix shape must match sigma_bar")
    return (grads * task_weight_matrix(state)).sum(axis=1)


def gradient_matrix(params, batches, config):
    """Per-task losses and the (d, K) matrix of task gradient columns."""
    losses = np.empty(len(batches))
    grads = np.empty((params.size, len(batches)))
    for k, batch in enumerate(batches):
        losses[k], grads[:, k] = nce_loss_and_gradient(params, batch, config)
    return losses, grads


def taco_step(params, batches, state: SensitivityState, base_optimizer, config):
    """One adaptive training step.

    Computes each task's gradient, folds the new sensitivities into sigma_bar,
    combines the columns through the task weight matrix, and hands the result
    to the base optimizer. Returns (params', state'). Loss values are exposed
    on base_optimizer callers via gradient_matrix when needed.
    """
    _, grads = gradient_matrix(params, batches, config)
    state = update_momentum(state, normalize_by_median(
        sensitivity_matrix(grads, params), state.median_epsilon))
    combined = adaptive_combine(grads, state)
    params = base_optimizer.step(params, combined)
    return params, replace(state, step=state.step + 1)
