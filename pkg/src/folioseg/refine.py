"""Segmentation refinement: mask out predicted foreground over light pixels.

The refined map is the pixel-wise product of the coarse predicted label map
(background encoded as 0) with a binary ink mask, so predicted foreground
survives only where the mask says ink.  Refinement can erase foreground but
never create it, and applying it twice changes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .imagecore import NUM_CLASSES, ensure_labels


@dataclass(frozen=True)
class RefinementReport:
    """How many predicted-foreground pixels the mask flipped to background."""

    flipped_total: int
    flipped_per_class: tuple[int, ...]  # index 0 (background) is always 0

    def to_dict(self) -> dict:
        return {
            "flipped_total": self.flipped_total,
            "flipped_per_class": list(self.flipped_per_class),
        }


def refine(coarse: np.ndarray, mask: np.ndarray):
    """Apply the ink mask to a coarse label map.

    Returns the refined map and a report of the flips.  ``mask`` must hold
    {0,1} with 1 on ink candidates.
    """
    coarse = ensure_labels(coarse)
    mask = np.asarray(mask)
    if coarse.shape != mask.shape:
        raise DimensionMismatch(f"coarse {coarse.shape} and mask {mask.shape} differ")
    if mask.min() < 0 or mask.max() > 1:
        raise ValueError("mask values must be 0 or 1")
    refined = (coarse * mask.astype(np.uint8)).astype(np.uint8)
    flipped = (coarse != 0) & (mask == 0)
    per_class = np.bincount(coarse[flipped], minlength=NUM_CLASSES)
    return refined, RefinementReport(
        flipped_total=int(flipped.sum()),
        flipped_per_class=tuple(int(v) for v in per_class),
    )
