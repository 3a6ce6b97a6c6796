"""Image loading and preprocessing for the style extractors.

Resize is an in-house bilinear (half-pixel centers, edge clamp, no
antialias) so results are reproducible bit-for-bit and independent of
image-library resampling quirks.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import ExtractorError


def load_rgb(path: str | Path) -> np.ndarray:
    """Decode an image file to an H x W x 3 uint8 array.

    Grayscale inputs are replicated across the three channels.
    """
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except Exception as exc:
        raise ExtractorError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ExtractorError(f"unexpected decoded shape {arr.shape} for {path}")
    return arr


def _axis_weights(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel-center sampling: out i reads src coordinate (i+0.5)*s/d - 0.5
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(coords).astype(np.int64)
    frac = coords - lo
    lo_c = np.clip(lo, 0, src - 1)
    hi_c = np.clip(lo + 1, 0, src - 1)
    return lo_c, hi_c, frac.astype(np.float32)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an H x W or H x W x C float32 array."""
    if image.ndim == 2:
        image = image[:, :, None]
        squeeze = True
    else:
        squeeze = False
    h, w = image.shape[:2]
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise ExtractorError("zero-area image")
    y_lo, y_hi, fy = _axis_weights(h, out_h)
    x_lo, x_hi, fx = _axis_weights(w, out_w)
    img = image.astype(np.float32, copy=False)
    top = img[y_lo][:, x_lo] * (1 - fx)[None, :, None] + img[y_lo][:, x_hi] * fx[None, :, None]
    bot = img[y_hi][:, x_lo] * (1 - fx)[None, :, None] + img[y_hi][:, x_hi] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return out[:, :, 0] if squeeze else out


def preprocess(
    image: np.ndarray,
    input_size: tuple[int, int],
    norm_mean: tuple[float, float, float],
    norm_std: tuple[float, float, float],
) -> np.ndarray:
    """uint8/float H x W x 3 image -> normalized 3 x H' x W' float32 tensor.

    Scales to [0, 1] first (uint8 inputs divided by 255), resizes, then
    applies the per-channel (x - mean) / std.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ExtractorError(f"expected H x W x 3 image, got shape {image.shape}")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ExtractorError("zero-area image")
    arr = image.astype(np.float32)
    if image.dtype == np.uint8:
        arr /= 255.0
    resized = resize_bilinear(arr, input_size[0], input_size[1])
    mean = np.asarray(norm_mean, dtype=np.float32).reshape(1, 1, 3)
    std = np.asarray(norm_std, dtype=np.float32).reshape(1, 1, 3)
    tensor = (resized - mean) / std
    out = np.ascontiguousarray(tensor.transpose(2, 0, 1))
    if not np.all(np.isfinite(out)):
        raise ExtractorError("non-finite values after preprocessing")
    return out
