"""Rasters, label maps, the ground-truth color codec, and PNG I/O.

Images are plain numpy arrays throughout the package: grayscale pages are
``(H, W) uint8``, color pages are ``(H, W, 3) uint8`` and label maps are
``(H, W) uint8`` holding class indices 0..3.  Everything here is pure and
safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import UnknownColor, UnsupportedImage

NUM_CLASSES = 4
CLASS_NAMES = ("background", "main_text", "comment", "decoration")

# Rec.601 luma coefficients.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

# L-infinity distance within which a ground-truth pixel snaps to the nearest
# palette color; antialiased mask edges land inside this band.
SNAP_TOLERANCE = 32


def _parse_hex(value: str) -> tuple[int, int, int]:
    s = value.strip().lstrip("#")
    if len(s) != 6:
        raise ValueError(f"expected '#rrggbb', got {value!r}")
    return (int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))


@dataclass(frozen=True)
class ClassPalette:
    """Colors used to encode the four layout classes in ground-truth masks.

    Index order follows ``CLASS_NAMES``: background, main text, comment,
    decoration.  The default matches the usual mask convention of black
    background, magenta main text, yellow comments and cyan decorations.
    """

    colors: tuple[tuple[int, int, int], ...] = (
        (0, 0, 0),
        (255, 0, 255),
        (255, 255, 0),
        (0, 255, 255),
    )

    def __post_init__(self) -> None:
        if len(self.colors) != NUM_CLASSES:
            raise ValueError(f"palette needs {NUM_CLASSES} colors, got {len(self.colors)}")
        if len(set(self.colors)) != NUM_CLASSES:
            raise ValueError("palette colors must be pairwise distinct")
        for rgb in self.colors:
            if len(rgb) != 3 or any(not (0 <= v <= 255) for v in rgb):
                raise ValueError(f"bad RGB triple {rgb!r}")

    def as_array(self) -> np.ndarray:
        """Palette as a (4, 3) uint8 lookup table."""
        return np.asarray(self.colors, dtype=np.uint8)

    @classmethod
    def from_hex(cls, mapping: dict[str, str]) -> "ClassPalette":
        """Build a palette from hex strings keyed by class name."""
        missing = [n for n in CLASS_NAMES if n not in mapping]
        if missing:
            raise ValueError(f"palette is missing classes: {missing}")
        return cls(tuple(_parse_hex(mapping[n]) for n in CLASS_NAMES))

    def to_hex(self) -> dict[str, str]:
        return {
            name: "#{:02x}{:02x}{:02x}".format(*rgb)
            for name, rgb in zip(CLASS_NAMES, self.colors)
        }


def ensure_gray(img: np.ndarray) -> np.ndarray:
    """Validate a (H, W) uint8 grayscale image."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.dtype != np.uint8 or arr.size == 0:
        raise UnsupportedImage(f"expected (H, W) uint8 grayscale, got {arr.dtype} {arr.shape}")
    return arr


def ensure_rgb(img: np.ndarray) -> np.ndarray:
    """Validate a (H, W, 3) uint8 color image."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8 or arr.size == 0:
        raise UnsupportedImage(f"expected (H, W, 3) uint8 color image, got {arr.dtype} {arr.shape}")
    return arr


def ensure_labels(labels: np.ndarray) -> np.ndarray:
    """Validate a (H, W) label map with values below NUM_CLASSES."""
    arr = np.asarray(labels)
    if arr.ndim != 2 or arr.size == 0:
        raise UnsupportedImage(f"expected (H, W) label map, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise UnsupportedImage(f"label map must be integer, got {arr.dtype}")
    if arr.min() < 0 or arr.max() >= NUM_CLASSES:
        raise UnsupportedImage("label values must lie in 0..3")
    return arr.astype(np.uint8, copy=False)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert a color image to 8-bit luminance (Rec.601 weights)."""
    rgb = ensure_rgb(img).astype(np.float64)
    lum = _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]
    return np.clip(np.rint(lum), 0, 255).astype(np.uint8)


def decode_labels(gt_img: np.ndarray, palette: ClassPalette | None = None) -> np.ndarray:
    """Turn a color ground-truth mask into a label map.

    Each pixel snaps to the nearest palette color under L-infinity distance;
    pixels farther than ``SNAP_TOLERANCE`` from every entry raise
    :class:`UnknownColor`.
    """
    palette = palette or ClassPalette()
    rgb = ensure_rgb(gt_img).astype(np.int16)
    pal = palette.as_array().astype(np.int16)
    dist = np.abs(rgb[:, :, None, :] - pal[None, None, :, :]).max(axis=3)
    labels = dist.argmin(axis=2).astype(np.uint8)
    nearest = dist.min(axis=2)
    bad = nearest > SNAP_TOLERANCE
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise UnknownColor(
            f"pixel (x={x}, y={y}) color {tuple(int(v) for v in rgb[y, x])} is farther "
            f"than {SNAP_TOLERANCE} from every palette color"
        )
    return labels


def encode_labels(labels: np.ndarray, palette: ClassPalette | None = None) -> np.ndarray:
    """Render a label map as a palette-colored image (inverse of decode)."""
    palette = palette or ClassPalette()
    lab = ensure_labels(labels)
    return palette.as_array()[lab]


def _nearest_indices(dst: int, src: int) -> np.ndarray:
    # Source pixel whose center is closest to each destination pixel center.
    pos = (np.arange(dst) + 0.5) * (src / dst)
    return np.minimum(pos.astype(np.int64), src - 1)


def _bilinear_axis(arr: np.ndarray, dst: int, axis: int) -> np.ndarray:
    src = arr.shape[axis]
    pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos).astype(np.int64)
    t = pos - lo
    lo0 = np.clip(lo, 0, src - 1)
    lo1 = np.clip(lo + 1, 0, src - 1)
    a = np.take(arr, lo0, axis=axis)
    b = np.take(arr, lo1, axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = dst
    t = t.reshape(shape)
    return a * (1.0 - t) + b * t


def resize(img: np.ndarray, width: int, height: int, mode: str = "bilinear") -> np.ndarray:
    """Resample an image or label map to ``width`` x ``height``.

    ``bilinear`` is meant for page images, ``nearest`` for label maps (it can
    only ever copy existing values).  Resizing to the original size returns a
    pixel-identical copy in both modes.
    """
    if width < 1 or height < 1:
        raise ValueError("target dimensions must be positive")
    arr = np.asarray(img)
    if arr.ndim not in (2, 3):
        raise UnsupportedImage(f"cannot resize array of shape {arr.shape}")
    src_h, src_w = arr.shape[:2]
    if mode == "nearest":
        rows = _nearest_indices(height, src_h)
        cols = _nearest_indices(width, src_w)
        return arr[rows[:, None], cols[None, :]].copy()
    if mode == "bilinear":
        out = arr.astype(np.float64)
        out = _bilinear_axis(out, height, axis=0)
        out = _bilinear_axis(out, width, axis=1)
        if np.issubdtype(arr.dtype, np.integer):
            info = np.iinfo(arr.dtype)
            return np.clip(np.rint(out), info.min, info.max).astype(arr.dtype)
        return out.astype(arr.dtype)
    raise ValueError(f"unknown resize mode {mode!r}")


def read_png(path) -> np.ndarray:
    """Read an 8-bit PNG as a (H, W) or (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        if (im.format or "").upper() != "PNG":
            raise UnsupportedImage(f"{path}: only PNG input is supported, got {im.format}")
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8)
        if im.mode == "RGB":
            return np.asarray(im, dtype=np.uint8)
        if im.mode in ("P", "RGBA"):
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
        if im.mode == "LA":
            return np.asarray(im.convert("L"), dtype=np.uint8)
        raise UnsupportedImage(f"{path}: unsupported PNG mode {im.mode} (8-bit L/RGB only)")


def write_png(path, img: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) uint8 array as PNG."""
    arr = np.ascontiguousarray(img)
    if arr.dtype != np.uint8:
        raise UnsupportedImage(f"PNG output must be uint8, got {arr.dtype}")
    if arr.ndim == 2:
        pil = Image.fromarray(arr, mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        pil = Image.fromarray(arr, mode="RGB")
    else:
        raise UnsupportedImage(f"cannot write array of shape {arr.shape} as PNG")
    pil.save(path, format="PNG")
