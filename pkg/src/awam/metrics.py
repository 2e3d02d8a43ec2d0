"""Evaluation metrics and the clean-vs-corrupted weight audit."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .weightnet import WeightNetParams, v_forward_batch


@dataclass
class RunMetrics:
    """One training run's evaluation summary."""

    mse_vs_labels: float | None = None
    mse_vs_fstar: float | None = None
    accuracy: float | None = None
    macro_f1: float | None = None
    selected: list[int] | None = None
    asp: float | None = None
    false_selection_rate: float | None = None
    mean_weight_clean: float | None = None
    mean_weight_corrupt: float | None = None
    wall_time: float | None = None

    def to_dict(self, include_wall_time: bool = True) -> dict:
        doc = asdict(self)
        if not include_wall_time:
            doc.pop("wall_time")
        return doc


def mse(pred: np.ndarray, y: np.ndarray) -> float:
    """Mean squared residual."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {y.shape}")
    if pred.size == 0:
        raise ValueError("mse of an empty vector is undefined")
    return float(np.mean((pred - y) ** 2))


def accuracy(pred_labels: np.ndarray, y: np.ndarray) -> float:
    """Fraction of exact label matches."""
    pred_labels = np.asarray(pred_labels)
    y = np.asarray(y)
    if pred_labels.shape != y.shape:
        raise ValueError(f"length mismatch: {pred_labels.shape} vs {y.shape}")
    if pred_labels.size == 0:
        raise ValueError("accuracy of an empty vector is undefined")
    return float(np.mean(pred_labels == y))


def macro_f1(pred_labels: np.ndarray, y: np.ndarray) -> float:
    """Unweighted mean of the per-class F1 scores over classes {0, 1}.

    Any 0/0 ratio (no predictions or no true members of a class) counts as 0.
    """
    pred_labels = np.asarray(pred_labels)
    y = np.asarray(y)
    if pred_labels.shape != y.shape:
        raise ValueError(f"length mismatch: {pred_labels.shape} vs {y.shape}")
    f1s = []
    for cls in (0, 1):
        tp = np.sum((pred_labels == cls) & (y == cls))
        fp = np.sum((pred_labels == cls) & (y != cls))
        fn = np.sum((pred_labels != cls) & (y == cls))
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return float(np.mean(f1s))


def asp(selected_runs, true_support, p: int):
    """Average selection percentage and false-selection rate over runs.

    asp is the mean recall of the true support; fsr is the mean fraction of
    the p - |support| irrelevant coordinates that were selected anyway.
    """
    true_support = set(true_support)
    if not true_support:
        raise ValueError("true support must be nonempty")
    n_irrelevant = max(1, p - len(true_support))
    recalls, false_rates = [], []
    for sel in selected_runs:
        sel = set(sel)
        recalls.append(len(sel & true_support) / len(true_support))
        false_rates.append(len(sel - true_support) / n_irrelevant)
    return float(np.mean(recalls)), float(np.mean(false_rates))


def weight_audit(theta: WeightNetParams, losses: np.ndarray, flags: np.ndarray):
    """Mean learned weight over clean and corrupted samples.

    Returns (mean_clean, mean_corrupt); mean_corrupt is None when no sample
    is flagged.
    """
    losses = np.asarray(losses, dtype=float)
    flags = np.asarray(flags, dtype=bool)
    if losses.shape != flags.shape:
        raise ValueError("losses and flags lengths disagree")
    if not np.any(~flags):
        raise ValueError("weight audit needs at least one clean sample")
    weights, _ = v_forward_batch(theta, losses)
    mean_clean = float(np.mean(weights[~flags]))
    mean_corrupt = float(np.mean(weights[flags])) if np.any(flags) else None
    return mean_clean, mean_corrupt
