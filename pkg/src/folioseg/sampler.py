"""Baseline patch tiling and per-epoch seeded random crop sampling.

Baseline patches are the non-overlapping squares that tile a page exactly;
they form the static training set.  Dynamic crops are square regions drawn
uniformly at random each epoch as extra training instances.  Crops are
generated lazily and never persisted.

Reproducibility: crop generation is a pure function of the seed material.
Per-image generators are derived from a ``numpy.random.SeedSequence`` in
image order, so parallel sampling reproduces the single-threaded sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CropTooLarge, DimensionMismatch, NotDivisible


@dataclass(frozen=True)
class CropSpec:
    """A square region: top-left corner (x, y) and side length."""

    x: int
    y: int
    side: int

    def __post_init__(self) -> None:
        if self.side < 1 or self.x < 0 or self.y < 0:
            raise ValueError(f"bad crop spec {self!r}")


@dataclass(frozen=True)
class PatchSet:
    """An ordered collection of crops over one source image."""

    specs: tuple[CropSpec, ...]
    image_id: str = ""
    kind: str = "baseline"  # "baseline" (disjoint full tiling) or "dynamic"


def tile(img_w: int, img_h: int, side: int, image_id: str = "") -> PatchSet:
    """Cover an image with disjoint side x side patches in row-major order.

    Both dimensions must be exact multiples of ``side``; resize first if not.
    """
    if side < 1:
        raise ValueError("side must be positive")
    if img_w % side or img_h % side:
        raise NotDivisible(
            f"image {img_w}x{img_h} is not divisible by patch side {side}"
        )
    specs = tuple(
        CropSpec(x, y, side)
        for y in range(0, img_h, side)
        for x in range(0, img_w, side)
    )
    return PatchSet(specs, image_id=image_id, kind="baseline")


def random_crops(img_w: int, img_h: int, side: int, count: int,
                 rng: np.random.Generator, image_id: str = "") -> PatchSet:
    """Draw ``count`` uniformly placed in-bounds square crops.

    Offsets are drawn from [0, dim - side] on each axis.  The generator state
    advances, so repeated calls yield fresh crops; an identically seeded
    generator reproduces the same specs.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if side > img_w or side > img_h:
        raise CropTooLarge(
            f"crop side {side} exceeds image dimensions {img_w}x{img_h}"
        )
    xs = rng.integers(0, img_w - side + 1, size=count)
    ys = rng.integers(0, img_h - side + 1, size=count)
    specs = tuple(CropSpec(int(x), int(y), side) for x, y in zip(xs, ys))
    return PatchSet(specs, image_id=image_id, kind="dynamic")


def extract(img: np.ndarray, gt: np.ndarray, spec: CropSpec):
    """Copy one region out of an image and its aligned ground truth."""
    img = np.asarray(img)
    gt = np.asarray(gt)
    if img.shape[:2] != gt.shape[:2]:
        raise DimensionMismatch(
            f"image {img.shape[:2]} and ground truth {gt.shape[:2]} differ"
        )
    h, w = img.shape[:2]
    if spec.x + spec.side > w or spec.y + spec.side > h:
        raise CropTooLarge(f"{spec} exceeds image bounds {w}x{h}")
    sl = (slice(spec.y, spec.y + spec.side), slice(spec.x, spec.x + spec.side))
    return img[sl].copy(), gt[sl].copy()


def epoch_dataset(baseline_sets, images, gts, crops_per_image: int,
                  seeds: np.random.SeedSequence):
    """Assemble one epoch of training instances.

    Returns a list of (image patch, label patch) pairs: every baseline patch
    first (in image order), then ``crops_per_image`` fresh random crops per
    image.  Crop generators are spawned from ``seeds`` in image order, which
    also advances ``seeds`` so a following epoch gets new crops.
    """
    if not (len(baseline_sets) == len(images) == len(gts)):
        raise DimensionMismatch("baseline_sets, images and gts must align")
    instances = []
    for patch_set, img, gt in zip(baseline_sets, images, gts):
        for spec in patch_set.specs:
            instances.append(extract(img, gt, spec))
    children = seeds.spawn(len(images))
    for child, patch_set, img, gt in zip(children, baseline_sets, images, gts):
        if crops_per_image == 0:
            continue
        side = patch_set.specs[0].side if patch_set.specs else min(img.shape[:2])
        rng = np.random.Generator(np.random.PCG64(child))
        h, w = img.shape[:2]
        crops = random_crops(w, h, side, crops_per_image, rng,
                             image_id=patch_set.image_id)
        for spec in crops.specs:
            instances.append(extract(img, gt, spec))
    return instances
