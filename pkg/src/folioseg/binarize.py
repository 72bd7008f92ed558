"""Niblack and Sauvola local adaptive thresholding.

Each pixel gets a threshold computed from the mean and standard deviation of
its n x n neighborhood, clamped to the image bounds at the borders.  Two
independent routes compute those window statistics:

* ``path="naive"`` slides the window directly, accumulating one shifted copy
  of the image per window offset (cost grows with the window area);
* ``path="integral"`` builds summed-area tables once and answers every window
  with four table lookups (cost independent of the window size).

Both routes accumulate exact 64-bit integer sums and share the final
float pipeline, so the masks they produce are bit-identical.

Mask polarity: 1 means the pixel is strictly below its local threshold,
i.e. dark, i.e. an ink candidate.  Ties go to background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedImage
from .imagecore import ensure_gray

#: Classical Niblack sensitivity for dark-text-on-light-page documents.
NIBLACK_DEFAULT_K = -0.2


@dataclass(frozen=True)
class SauvolaParams:
    """Window size, sensitivity k and dynamic range R of the std deviation.

    Defaults are tuned for lightly degraded manuscript pages: a small window
    and a low k keep page degradation out of the mask.  R = 128 is the usual
    choice for 8-bit input (half the intensity range).
    """

    window: int = 15
    k: float = 0.1
    r: float = 128.0

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and >= 3, got {self.window}")
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.r <= 0:
            raise ValueError(f"R must be positive, got {self.r}")


@dataclass(frozen=True)
class IntegralPair:
    """Summed-area tables of intensity and squared intensity.

    Both tables are (H+1, W+1) int64 with a zero first row and column, so any
    axis-aligned rectangle sum is four lookups.  64-bit accumulators cannot
    overflow below 2**32 pixels (max per-pixel square is 255**2 < 2**16).
    """

    sums: np.ndarray
    squares: np.ndarray

    def rect_sums(self, y0: int, x0: int, y1: int, x1: int) -> tuple[int, int]:
        """Sum and squared sum over the half-open rectangle [y0:y1, x0:x1]."""
        s = self.sums
        q = self.squares
        return (
            int(s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0]),
            int(q[y1, x1] - q[y0, x1] - q[y1, x0] + q[y0, x0]),
        )


def integral_tables(img: np.ndarray) -> IntegralPair:
    """Build exact integer summed-area tables for a grayscale image."""
    gray = ensure_gray(img)
    h, w = gray.shape
    v = gray.astype(np.int64)
    sums = np.zeros((h + 1, w + 1), dtype=np.int64)
    squares = np.zeros((h + 1, w + 1), dtype=np.int64)
    sums[1:, 1:] = v.cumsum(axis=0).cumsum(axis=1)
    squares[1:, 1:] = (v * v).cumsum(axis=0).cumsum(axis=1)
    return IntegralPair(sums, squares)


def _check_window(window: int) -> None:
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")


def _local_sums_integral(gray: np.ndarray, window: int):
    h, w = gray.shape
    r = window // 2
    tables = integral_tables(gray)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)

    def rect(table):
        return (
            table[y1[:, None], x1[None, :]]
            - table[y0[:, None], x1[None, :]]
            - table[y1[:, None], x0[None, :]]
            + table[y0[:, None], x0[None, :]]
        )

    counts = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return rect(tables.sums), rect(tables.squares), counts.astype(np.int64)


def _local_sums_naive(gray: np.ndarray, window: int):
    h, w = gray.shape
    r = window // 2
    v = gray.astype(np.int64)
    sq = v * v
    sums = np.zeros((h, w), dtype=np.int64)
    squares = np.zeros((h, w), dtype=np.int64)
    counts = np.zeros((h, w), dtype=np.int64)
    for dy in range(-r, r + 1):
        ys0, ys1 = max(0, -dy), h - max(0, dy)
        if ys0 >= ys1:
            continue
        yt0, yt1 = ys0 + dy, ys1 + dy
        for dx in range(-r, r + 1):
            xs0, xs1 = max(0, -dx), w - max(0, dx)
            if xs0 >= xs1:
                continue
            xt0, xt1 = xs0 + dx, xs1 + dx
            sums[ys0:ys1, xs0:xs1] += v[yt0:yt1, xt0:xt1]
            squares[ys0:ys1, xs0:xs1] += sq[yt0:yt1, xt0:xt1]
            counts[ys0:ys1, xs0:xs1] += 1
    return sums, squares, counts


_PATHS = {"integral": _local_sums_integral, "naive": _local_sums_naive}


def local_mean_std(img: np.ndarray, window: int, path: str = "integral"):
    """Per-pixel mean and population std-dev of the clamped window.

    Returns two (H, W) float64 arrays.  Border pixels use the intersection of
    the window with the image, so no padding value ever enters the stats.
    """
    gray = ensure_gray(img)
    _check_window(window)
    if path not in _PATHS:
        raise ValueError(f"unknown path {path!r}, expected 'integral' or 'naive'")
    s, q, c = _PATHS[path](gray, window)
    mean = s / c
    var = q / c - mean * mean
    np.clip(var, 0.0, None, out=var)
    return mean, np.sqrt(var)


def sauvola_threshold(mean, std, params: SauvolaParams | None = None):
    """Threshold t = mean * (1 + k * (std / R - 1)); works on scalars or arrays."""
    p = params or SauvolaParams()
    return mean * (1.0 + p.k * (np.asarray(std, dtype=np.float64) / p.r - 1.0))


def niblack_threshold(mean, std, k: float = NIBLACK_DEFAULT_K):
    """Threshold t = mean + k * std; works on scalars or arrays."""
    return mean + k * np.asarray(std, dtype=np.float64)


def sauvola_threshold_field(img: np.ndarray, params: SauvolaParams | None = None,
                            path: str = "integral") -> np.ndarray:
    """Per-pixel Sauvola threshold over clamped windows."""
    p = params or SauvolaParams()
    mean, std = local_mean_std(img, p.window, path)
    return sauvola_threshold(mean, std, p)


def sauvola_mask(img: np.ndarray, params: SauvolaParams | None = None,
                 path: str = "integral") -> np.ndarray:
    """Binary ink mask: 1 where intensity < local Sauvola threshold."""
    gray = ensure_gray(img)
    return (gray < sauvola_threshold_field(gray, params, path)).astype(np.uint8)


def niblack_mask(img: np.ndarray, window: int = 15, k: float = NIBLACK_DEFAULT_K,
                 path: str = "integral") -> np.ndarray:
    """Binary ink mask: 1 where intensity < local Niblack threshold."""
    gray = ensure_gray(img)
    mean, std = local_mean_std(gray, window, path)
    return (gray < niblack_threshold(mean, std, k)).astype(np.uint8)


def mask_to_image(mask: np.ndarray) -> np.ndarray:
    """Render a {0,1} mask as an 8-bit image (0 -> black, 1 -> white)."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.min() < 0 or arr.max() > 1:
        raise UnsupportedImage("expected a (H, W) mask of {0,1}")
    return (arr.astype(np.uint8)) * np.uint8(255)
