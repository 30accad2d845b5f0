"""Per-class and macro F1 with explicit undefined-case conventions."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class LengthMismatchError(ValueError):
    """Predictions and labels differ in length."""


def per_class_f1(labels: Sequence[int], preds: Sequence[int],
                 n_classes: int) -> np.ndarray:
    """F1 per class; 0 where precision or recall is undefined."""
    if len(labels) != len(preds):
        raise LengthMismatchError(
            f"{len(preds)} predictions vs {len(labels)} labels")
    labels = np.asarray(labels)
    preds = np.asarray(preds)
    f1 = np.zeros(n_classes)
    for c in range(n_classes):
        tp = int(np.sum((preds == c) & (labels == c)))
        fp = int(np.sum((preds == c) & (labels != c)))
        fn = int(np.sum((preds != c) & (labels == c)))
        denom = 2 * tp + fp + fn
        f1[c] = (2 * tp / denom) if denom > 0 else 0.0
    return f1


def macro_f1(labels: Sequence[int], preds: Sequence[int], n_classes: int) -> float:
    """Unweighted mean F1 over the classes present in the labels."""
    f1 = per_class_f1(labels, preds, n_classes)
    present = np.unique(np.asarray(labels))
    if present.size == 0:
        return 0.0
    return float(f1[present].mean())
