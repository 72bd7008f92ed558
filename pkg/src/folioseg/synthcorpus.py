"""Seeded synthetic manuscript pages with exact ground truth.

Pages imitate the structure of a medieval folio at desk scale: a noisy
parchment field, a main text block of wavy horizontal stroke runs, narrower
comment strokes in a margin column, and filled elliptical decoration blobs.
Strokes are random-walk polylines rather than glyphs; the downstream math is
glyph-agnostic and this keeps the generator dependency-free.

Labels are written in the same operation as the ink, so the ground truth is
exact by construction.  Every ink intensity sits at least 40 levels below the
parchment base, which guarantees the classes are separable by thresholding.
All randomness flows from the recipe seed, so a recipe is a reproducible
description of a page.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

Rect = tuple[int, int, int, int]  # (x0, y0, x1, y1), half-open

#: Minimum gap between parchment base and the brightest allowed ink.
SEPARABILITY_MARGIN = 40

# Stroke run ("word") lengths and gaps, in pixels.
_RUN_RANGE = (6, 16)
_GAP_RANGE = (2, 7)
# Decoration blob semi-axes; small enough that a 15x15 window centered on any
# blob pixel always sees some parchment.
_BLOB_AXES = (4, 6)


@dataclass(frozen=True)
class PageRecipe:
    """Everything needed to deterministically regenerate one page."""

    width: int = 224
    height: int = 336
    parchment: int = 205
    noise: int = 6
    text_block: Rect = (56, 28, 168, 308)
    comment_blocks: tuple[Rect, ...] = ((180, 28, 216, 308),)
    decoration_block: Rect = (12, 28, 44, 308)
    decoration_count: int = 12
    stroke_thickness: int = 3
    comment_thickness: int = 2
    line_spacing: int = 9
    comment_spacing: int = 8
    text_ink: tuple[int, int] = (25, 60)
    comment_ink: tuple[int, int] = (70, 105)
    decoration_ink: tuple[int, int] = (110, 140)
    seed: int = 0

    def __post_init__(self) -> None:
        for rect in (self.text_block, self.decoration_block, *self.comment_blocks):
            x0, y0, x1, y1 = rect
            if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                raise ValueError(f"region {rect} outside page {self.width}x{self.height}")
        for lo, hi in (self.text_ink, self.comment_ink, self.decoration_ink):
            if not (0 <= lo <= hi):
                raise ValueError(f"bad ink range ({lo}, {hi})")
            if hi >= self.parchment - SEPARABILITY_MARGIN:
                raise ValueError(
                    f"ink up to {hi} too close to parchment {self.parchment}; "
                    f"need a margin of {SEPARABILITY_MARGIN}"
                )
        if self.noise < 0 or self.parchment + self.noise > 255:
            raise ValueError("parchment plus noise must stay within 8 bits")


def _stamp_strokes(gray, labels, rng, rect: Rect, spacing: int, thickness: int,
                   ink: tuple[int, int], label: int) -> None:
    """Wavy horizontal stroke runs filling a block, one line per spacing."""
    x0, y0, x1, y1 = rect
    ink_lo, ink_hi = ink
    y_max = y1 - thickness
    for base_y in range(y0 + 1, y_max, spacing):
        y = base_y
        x = x0
        while x < x1:
            run = int(rng.integers(_RUN_RANGE[0], _RUN_RANGE[1] + 1))
            for xx in range(x, min(x + run, x1)):
                y = int(np.clip(y + rng.integers(-1, 2), y0, y_max))
                value = np.uint8(rng.integers(ink_lo, ink_hi + 1))
                gray[y:y + thickness, xx] = value
                labels[y:y + thickness, xx] = label
            x += run + int(rng.integers(_GAP_RANGE[0], _GAP_RANGE[1] + 1))


def _stamp_blobs(gray, labels, rng, rect: Rect, count: int,
                 ink: tuple[int, int], label: int) -> None:
    """Filled elliptical blobs on a jittered vertical ladder (no overlap)."""
    if count == 0:
        return
    x0, y0, x1, y1 = rect
    slot = (y1 - y0) / count
    yy, xx = np.mgrid[0:gray.shape[0], 0:gray.shape[1]]
    for i in range(count):
        ry = int(rng.integers(_BLOB_AXES[0], _BLOB_AXES[1] + 1))
        rx = int(rng.integers(_BLOB_AXES[0], _BLOB_AXES[1] + 1))
        cy = int(np.clip(y0 + (i + 0.5) * slot + rng.integers(-2, 3), y0 + ry, y1 - 1 - ry))
        cx = int(rng.integers(x0 + rx, x1 - rx))
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        values = rng.integers(ink[0], ink[1] + 1, size=int(inside.sum()))
        gray[inside] = values.astype(np.uint8)
        labels[inside] = label
    return


def generate_page(recipe: PageRecipe):
    """Render one page; returns ((H, W, 3) uint8 image, (H, W) uint8 labels).

    Channels are equal (neutral gray), so the luminance of every pixel equals
    the stamped intensity exactly.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(recipe.seed)))
    h, w = recipe.height, recipe.width
    if recipe.noise:
        field = recipe.parchment + rng.integers(-recipe.noise, recipe.noise + 1,
                                                size=(h, w), dtype=np.int64)
        gray = np.clip(field, 0, 255).astype(np.uint8)
    else:
        gray = np.full((h, w), recipe.parchment, dtype=np.uint8)
    labels = np.zeros((h, w), dtype=np.uint8)

    _stamp_strokes(gray, labels, rng, recipe.text_block, recipe.line_spacing,
                   recipe.stroke_thickness, recipe.text_ink, label=1)
    for rect in recipe.comment_blocks:
        _stamp_strokes(gray, labels, rng, rect, recipe.comment_spacing,
                       recipe.comment_thickness, recipe.comment_ink, label=2)
    _stamp_blobs(gray, labels, rng, recipe.decoration_block,
                 recipe.decoration_count, recipe.decoration_ink, label=3)

    image = np.repeat(gray[:, :, None], 3, axis=2)
    return image, labels


def generate_corpus(n_pages: int, base_recipe: PageRecipe | None = None,
                    seed: int = 0):
    """Generate ``n_pages`` pages with per-page seeds derived from the root seed.

    The page at index i always gets the same seed material regardless of how
    many pages are requested, so corpora with a shared root seed share pages.
    """
    if n_pages < 1:
        raise ValueError("need at least one page")
    base = base_recipe or PageRecipe()
    pages = []
    for i in range(n_pages):
        child = np.random.SeedSequence(entropy=seed, spawn_key=(i,))
        page_seed = int(child.generate_state(1)[0])
        pages.append(generate_page(replace(base, seed=page_seed)))
    return pages


#: Named layout variants standing in for distinct manuscripts.
RECIPE_VARIANTS = ("carolus", "bastarda", "rotunda")


def recipe_variant(name: str) -> PageRecipe:
    """A base recipe with a distinct layout per named variant."""
    if name == "carolus":
        return PageRecipe()
    if name == "bastarda":
        return PageRecipe(
            text_block=(48, 36, 172, 300),
            comment_blocks=((184, 36, 214, 300),),
            decoration_block=(10, 36, 40, 300),
            stroke_thickness=4,
            line_spacing=11,
            comment_spacing=9,
            decoration_count=10,
        )
    if name == "rotunda":
        return PageRecipe(
            text_block=(60, 24, 164, 312),
            comment_blocks=((176, 24, 214, 312),),
            decoration_block=(14, 24, 46, 312),
            stroke_thickness=2,
            line_spacing=8,
            comment_spacing=7,
            decoration_count=14,
        )
    raise ValueError(f"unknown variant {name!r}; pick one of {RECIPE_VARIANTS}")
