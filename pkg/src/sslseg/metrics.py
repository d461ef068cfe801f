"""Dice scores, evaluation reports and model-size accounting."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError

FOREGROUND = (1, 2, 3)
CLASS_NAMES = {1: "RV", 2: "MYO", 3: "LV"}


@dataclass(frozen=True)
class DiceReport:
    per_class: tuple  # (RV, MYO, LV)
    average: float
    num_slices: int
    mode: str = "slice"

    def to_tsv(self):
        header = "\t".join(["RV", "MYO", "LV", "Average", "num_slices"])
        row = "\t".join([f"{v:.4f}" for v in (*self.per_class, self.average)] + [str(self.num_slices)])
        return header + "\n" + row + "\n"

    def to_keyvalue(self):
        lines = [f"dice_{CLASS_NAMES[c].lower()}={v:.6f}" for c, v in zip(FOREGROUND, self.per_class)]
        lines += [f"dice_average={self.average:.6f}", f"num_slices={self.num_slices}", f"mode={self.mode}"]
        return "\n".join(lines) + "\n"


def _check_pair(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise InvalidArgumentError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def _dice_from_counts(intersection, size_p, size_t):
    if size_p + size_t == 0:
        return 1.0
    return 2.0 * intersection / (size_p + size_t)


def dice_per_class(pred, truth, cls):
    """2|P & T| / (|P| + |T|) for one class; 1.0 when both masks are empty."""
    pred, truth = _check_pair(pred, truth)
    p = pred == cls
    t = truth == cls
    return _dice_from_counts(int(np.count_nonzero(p & t)), int(np.count_nonzero(p)),
                             int(np.count_nonzero(t)))


def dice_report(preds, truths, subjects=None):
    """Average per-class Dice over slices, or over subjects when ``subjects`` is given.

    Subject mode pools each subject's slices into one volume before scoring.
    """
    if len(preds) != len(truths) or not preds:
        raise InvalidArgumentError("need equally many (>0) predictions and ground truths")
    if subjects is None:
        scores = np.array([[dice_per_class(p, t, c) for c in FOREGROUND] for p, t in zip(preds, truths)])
        mode = "slice"
    else:
        if len(subjects) != len(preds):
            raise InvalidArgumentError("one subject id per slice is required")
        pooled = {}
        for p, t, s in zip(preds, truths, subjects):
            p, t = _check_pair(p, t)
            acc = pooled.setdefault(s, np.zeros((len(FOREGROUND), 3), dtype=np.int64))
            for i, c in enumerate(FOREGROUND):
                pm, tm = p == c, t == c
                acc[i] += (np.count_nonzero(pm & tm), np.count_nonzero(pm), np.count_nonzero(tm))
        scores = np.array([[_dice_from_counts(*row) for row in pooled[s]] for s in sorted(pooled)])
        mode = "subject"
    per_class = tuple(float(v) for v in scores.mean(axis=0))
    return DiceReport(per_class, float(np.mean(per_class)), len(preds), mode)


def count_isolated_pixels(labels):
    """Number of single-pixel 4-connected components, over all classes."""
    labels = np.asarray(labels)
    total = 0
    for c in np.unique(labels):
        comp, n = ndimage.label(labels == c)
        if n:
            sizes = np.bincount(comp.ravel())[1:]
            total += int(np.count_nonzero(sizes == 1))
    return total
