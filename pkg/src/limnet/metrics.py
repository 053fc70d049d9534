"""Macro/micro precision, recall and F1 over class predictions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass
class ConfusionMatrix:
    """Counts indexed [gold][predicted]; total equals the scored items."""

    counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(gold: Sequence[int], pred: Sequence[int], num_classes: int) -> ConfusionMatrix:
    """Tally a confusion matrix; gold labels of -1 are skipped as unscored."""
    if len(gold) != len(pred):
        raise ConfigError(f"gold/pred length mismatch: {len(gold)} vs {len(pred)}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    for g, p in zip(gold, pred):
        if g == -1:
            continue
        if not 0 <= g < num_classes:
            raise ConfigError(f"gold label {g} out of range [0, {num_classes})")
        if not 0 <= p < num_classes:
            raise ConfigError(f"predicted label {p} out of range [0, {num_classes})")
        counts[g, p] += 1
    return ConfusionMatrix(counts)


def macro_prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Unweighted per-class mean of precision, recall and F1.

    Any 0/0 is defined as 0, and the average runs over all configured
    classes, including classes absent from the gold labels.
    """
    c = cm.counts
    tp = np.diag(c).astype(np.float64)
    pred_totals = c.sum(axis=0).astype(np.float64)
    gold_totals = c.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_totals > 0, tp / pred_totals, 0.0)
        recall = np.where(gold_totals > 0, tp / gold_totals, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return float(precision.mean()), float(recall.mean()), float(f1.mean())


def micro_f1(cm: ConfusionMatrix) -> float:
    """Micro-averaged F1; for single-label data this equals accuracy."""
    if cm.total == 0:
        raise ConfigError("no scored items")
    return float(np.trace(cm.counts) / cm.total)
