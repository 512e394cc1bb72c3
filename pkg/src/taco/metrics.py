"""Retrieval metrics and parameter-specialization analysis.

The specialization report classifies every parameter by the entropy of its
task distribution (softmax of amortized sensitivities at the combiner's
temperature, natural log): parameters whose sensitivities never rose above a
tiny activation floor are Not Activated, low-entropy parameters are Task
Specific, and the rest are histogrammed by entropy. The three masses sum to
one exactly because they are disjoint integer counts over d parameters.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .sensitivity import SensitivityState, row_softmax


def r_precision(ranked_ids, gold_ids) -> float:
    """Fraction of the |gold| top-ranked ids that are gold."""
    gold = np.unique(np.asarray(gold_ids, dtype=np.int64))
    if gold.size == 0:
        raise ValueError("gold set must be nonempty")
    ranked = np.asarray(ranked_ids, dtype=np.int64)
    if ranked.size < gold.size:
        raise ValueError("ranking shorter than the gold set")
    return float(np.isin(ranked[:gold.size], gold).sum() / gold.size)


def recall_at_k(ranked_ids, gold_ids, k: int) -> float:
    """Fraction of gold ids found in the top k."""
    if k < 1:
        raise ValueError("k must be positive")
    gold = np.unique(np.asarray(gold_ids, dtype=np.int64))
    if gold.size == 0:
        raise ValueError("gold set must be nonempty")
    ranked = np.asarray(ranked_ids, dtype=np.int64)[:k]
    return float(np.isin(gold, ranked).sum() / gold.size)


def task_entropy(q) -> float:
    """Natural-log entropy of a task distribution; 0 * log 0 counts as 0."""
    q = np.asarray(q, dtype=np.float64)
    if np.any(q < 0.0) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("q must be a probability distribution")
    nz = q[q > 0.0]
    return float(-(nz * np.log(nz)).sum())


def _entropy_rows(q: np.ndarray) -> np.ndarray:
    logs = np.where(q > 0.0, np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return -(q * logs).sum(axis=1)


@dataclass
class SpecializationReport:
    """Per-parameter specialization summary of a SensitivityState."""

    entropy: np.ndarray
    fraction_task_specific: float
    fraction_not_activated: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    density_samples: list[np.ndarray]
    tau: float
    entropy_threshold: float
    activation_threshold: float
    density_outlier_multiplier: float

    @property
    def num_params(self) -> int:
        return self.entropy.size

    def summary_dict(self) -> dict:
        return {
            "num_params": int(self.num_params),
            "num_tasks": len(self.density_samples),
            "tau": self.tau,
            "entropy_threshold": self.entropy_threshold,
            "activation_threshold": self.activation_threshold,
            "density_outlier_multiplier": self.density_outlier_multiplier,
            "fraction_task_specific": self.fraction_task_specific,
            "fraction_not_activated": self.fraction_not_activated,
        }


def specialization_report(state: SensitivityState, entropy_threshold: float = 0.3,
                          activation_threshold: float = 1e-8, num_bins: int = 16,
                          density_outlier_multiplier: float = 10.0) -> SpecializationReport:
    sb = state.sigma_bar
    d, k = sb.shape
    q = row_softmax(sb, state.tau)
    entropy = _entropy_rows(q)

    activated = (sb >= activation_threshold).any(axis=1)
    task_specific = activated & (entropy < entropy_threshold)
    rest = activated & ~task_specific

    hi = max(np.log(k), entropy_threshold) + 1e-9
    edges = np.linspace(entropy_threshold, hi, num_bins + 1)
    counts, _ = np.histogram(entropy[rest], bins=edges)
    if counts.sum() != rest.sum():  # pragma: no cover - guards float edge cases
        raise AssertionError("histogram lost mass")

    samples = []
    for col in sb.T:
        med = np.median(col)
        cutoff = density_outlier_multiplier * max(med, activation_threshold)
        samples.append(col[col <= cutoff].copy())

    return SpecializationReport(
        entropy=entropy,
        fraction_task_specific=float(task_specific.sum() / d),
        fraction_not_activated=float((~activated).sum() / d),
        hist_edges=edges,
        hist_counts=counts,
        density_samples=samples,
        tau=state.tau,
        entropy_threshold=entropy_threshold,
        activation_threshold=activation_threshold,
        density_outlier_multiplier=density_outlier_multiplier,
    )


# --- exports -----------------------------------------------------------------


def write_histogram_csv(report: SpecializationReport, path) -> None:
    """Entropy histogram rows plus the two headline bins."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_low", "bin_high", "count"])
        w.writerow(["not_activated", "not_activated",
                    round(report.fraction_not_activated * report.num_params)])
        w.writerow([0.0, report.entropy_threshold,
                    round(report.fraction_task_specific * report.num_params)])
        for lo, hi, c in zip(report.hist_edges[:-1], report.hist_edges[1:],
                             report.hist_counts):
            w.writerow([lo, hi, int(c)])


def write_density_csv(report: SpecializationReport, path) -> None:
    """Per-task sensitivity samples (outliers beyond the cutoff dropped)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task", "sensitivity"])
        for k, col in enumerate(report.density_samples):
            for v in col:
                w.writerow([k, repr(float(v))])


def write_metrics_csv(rows, path) -> None:
    """Generic (phase, task, metric, value) rows."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["phase", "task", "metric", "value"])
        for row in rows:
            w.writerow(list(row))


def write_summary_json(report: SpecializationReport, path) -> None:
    with open(path, "w") as f:
        json.dump(report.summary_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
