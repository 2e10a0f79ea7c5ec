"""Confusion matrix, per-class IoU and mean IoU."""

import numpy as np

from .tensor import IGNORE_INDEX


class ConfusionMatrix:
    """Counts indexed ``[truth, pred]``.

    Pixels whose truth is IGNORE_INDEX are skipped and tallied in ``ignored``.
    Pixels with a valid truth but an IGNORE_INDEX prediction (abstentions)
    go to ``unassigned[truth]`` and count as misses for that class.
    """

    def __init__(self, num_classes):
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.unassigned = np.zeros(num_classes, dtype=np.int64)
        self.ignored = 0

    def accumulate(self, pred, truth):
        pred = np.asarray(pred)
        truth = np.asarray(truth)
        if pred.shape != truth.shape:
            raise ValueError(f"prediction {pred.shape} and truth {truth.shape} differ in shape")
        C = self.num_classes
        valid = truth != IGNORE_INDEX
        self.ignored += int((~valid).sum())
        t = truth[valid].astype(np.int64)
        p = pred[valid].astype(np.int64)
        if t.size and (t.min() < 0 or t.max() >= C):
            raise ValueError(f"truth label outside [0, {C})")
        abstain = p == IGNORE_INDEX
        if np.any((p[~abstain] < 0) | (p[~abstain] >= C)):
            raise ValueError(f"predicted label outside [0, {C})")
        self.unassigned += np.bincount(t[abstain], minlength=C)
        self.counts += np.bincount(C * t[~abstain] + p[~abstain], minlength=C * C).reshape(C, C)
        return self

    def merge(self, other):
        if other.num_classes != self.num_classes:
            raise ValueError("cannot merge matrices of different size")
        self.counts += other.counts
        self.unassigned += other.unassigned
        self.ignored += other.ignored
        return self

    @property
    def pixels(self):
        return int(self.counts.sum() + self.unassigned.sum())

    def pixel_accuracy(self):
        n = self.pixels
        return float(np.trace(self.counts) / n) if n else float("nan")


def iou(cm):
    """Per-class IoU (NaN where the class is absent from both truth and
    prediction) and the mean over defined classes."""
    tp = np.diag(cm.counts).astype(np.float64)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp + cm.unassigned
    union = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(union > 0, tp / union, np.nan)
    defined = ~np.isnan(per_class)
    miou = float(per_class[defined].mean()) if defined.any() else float("nan")
    return per_class, miou


def iou_report(cm, class_names):
    per_class, miou = iou(cm)
    zero_filled = np.nan_to_num(per_class, nan=0.0)
    return {
        "per_class": {n: (None if np.isnan(v) else float(v)) for n, v in zip(class_names, per_class)},
        "per_class_zero_filled": {n: float(v) for n, v in zip(class_names, zero_filled)},
        "miou": None if np.isnan(miou) else miou,
        "miou_zero_filled": float(zero_filled.mean()),
        "pixels": cm.pixels,
        "ignored": int(cm.ignored),
        "pixel_accuracy": cm.pixel_accuracy(),
    }
