"""Confusion matrices and pixel-level segmentation metrics.

Per class c the confusion matrix M (entry (g, p) = pixels with ground-truth
class g predicted as p) yields TP = M[c,c], FP = column sum - TP and
FN = row sum - TP, from which precision, recall, IoU and F1 follow.  The
aggregate score is the average of per-class values weighted by ground-truth
class frequency; both variants (background included / excluded) are reported
because background dominance inflates the inclusive one.

Degenerate denominators: a metric with a zero denominator evaluates to 0
unless the class is entirely absent (TP = FP = FN = 0), in which case the
class simply carries zero weight in the aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .imagecore import CLASS_NAMES, NUM_CLASSES, ensure_labels

# --------------------------------------------------------------------------
# Published reference numbers (DIVA-HisDB), used only for report rendering
# and as frozen test data.  Class percentages per manuscript:
# --------------------------------------------------------------------------

REFERENCE_CLASS_PERCENTAGES = {
    "CB55": {"background": 82.41, "comment": 8.36, "decoration": 0.55, "main_text": 8.68},
    "CSG18": {"background": 85.16, "comment": 6.78, "decoration": 1.47, "main_text": 6.59},
    "CSG863": {"background": 77.82, "comment": 6.35, "decoration": 1.83, "main_text": 14.00},
}

# Published full-supervision competitor scores (precision, recall, iou, f1).
REFERENCE_COMPETITORS = {
    "FCN": (0.918, 0.916, 0.843, 0.904),
    "LRASPP": (0.930, 0.911, 0.854, 0.910),
    "PSPNet": (0.904, 0.910, 0.838, 0.899),
    "DeepLabV3": (0.918, 0.915, 0.842, 0.903),
    "DeepLabV3+": (0.958, 0.956, 0.920, 0.954),
    "MLA": (0.989, 0.995, 0.989, 0.995),
}

# Published mean scores of the few-shot framework per ablation configuration.
REFERENCE_ABLATION_MEANS = {
    "baseline": (0.919, 0.891, 0.840, 0.894),
    "refinement": (0.981, 0.940, 0.930, 0.960),
    "dynamic_crops": (0.917, 0.921, 0.857, 0.912),
    "both": (0.981, 0.980, 0.963, 0.980),
}


def reference_frequencies(manuscript: str) -> np.ndarray:
    """Published class distribution as fractions in class-index order."""
    row = REFERENCE_CLASS_PERCENTAGES[manuscript]
    return np.array([row[name] / 100.0 for name in CLASS_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class MetricQuad:
    """Precision, recall, IoU and F1 for one class or one aggregate."""

    precision: float
    recall: float
    iou: float
    f1: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.precision, self.recall, self.iou, self.f1)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "iou": self.iou, "f1": self.f1}


@dataclass(frozen=True)
class MetricRow:
    """Per-class quads plus frequency-weighted aggregates."""

    per_class: tuple[MetricQuad, ...]
    weighted_all: MetricQuad
    weighted_foreground: MetricQuad

    def to_dict(self) -> dict:
        return {
            "per_class": {name: q.to_dict()
                          for name, q in zip(CLASS_NAMES, self.per_class)},
            "weighted_all": self.weighted_all.to_dict(),
            "weighted_foreground": self.weighted_foreground.to_dict(),
        }


def confusion(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """4x4 count matrix; entry (g, p) counts GT-class-g pixels predicted p."""
    gt = ensure_labels(gt)
    pred = ensure_labels(pred)
    if gt.shape != pred.shape:
        raise DimensionMismatch(f"gt {gt.shape} and prediction {pred.shape} differ")
    joint = gt.astype(np.int64).ravel() * NUM_CLASSES + pred.ravel()
    return np.bincount(joint, minlength=NUM_CLASSES * NUM_CLASSES).reshape(
        NUM_CLASSES, NUM_CLASSES
    )


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def class_metrics(matrix: np.ndarray, c: int) -> MetricQuad:
    """Precision, recall, IoU and F1 of class ``c`` from a confusion matrix."""
    m = np.asarray(matrix, dtype=np.int64)
    tp = float(m[c, c])
    fp = float(m[:, c].sum() - m[c, c])
    fn = float(m[c, :].sum() - m[c, c])
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    iou = _safe_div(tp, tp + fp + fn)
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return MetricQuad(precision, recall, iou, f1)


def _weighted(quads, freqs) -> MetricQuad:
    total = freqs.sum()
    if total <= 0:
        return MetricQuad(0.0, 0.0, 0.0, 0.0)
    w = freqs / total
    vals = [float(sum(w[c] * quads[c].as_tuple()[i] for c in range(len(quads))))
            for i in range(4)]
    return MetricQuad(*vals)


def weighted_metrics(matrix: np.ndarray) -> MetricRow:
    """Per-class metrics plus GT-frequency-weighted aggregates.

    Classes absent from the ground truth get weight zero.  The foreground
    aggregate renormalizes over the three non-background classes.
    """
    m = np.asarray(matrix, dtype=np.int64)
    if m.shape != (NUM_CLASSES, NUM_CLASSES) or (m < 0).any():
        raise ValueError("expected a nonnegative 4x4 confusion matrix")
    quads = tuple(class_metrics(m, c) for c in range(NUM_CLASSES))
    freqs = m.sum(axis=1).astype(np.float64)
    return MetricRow(
        per_class=quads,
        weighted_all=_weighted(quads, freqs),
        weighted_foreground=_weighted(quads[1:], freqs[1:]),
    )


def mean_rows(rows) -> MetricRow:
    """Arithmetic mean of several MetricRows (per class and aggregates)."""
    rows = list(rows)
    if not rows:
        raise ValueError("need at least one row")

    def avg(quads) -> MetricQuad:
        arr = np.array([q.as_tuple() for q in quads], dtype=np.float64)
        return MetricQuad(*(float(v) for v in arr.mean(axis=0)))

    per_class = tuple(avg([r.per_class[c] for r in rows]) for c in range(NUM_CLASSES))
    return MetricRow(
        per_class=per_class,
        weighted_all=avg([r.weighted_all for r in rows]),
        weighted_foreground=avg([r.weighted_foreground for r in rows]),
    )
