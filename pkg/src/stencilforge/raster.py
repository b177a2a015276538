"""PNG input/output and the pixel-grid convention shared by every module.

Images are numpy arrays: an RGB image has shape ``(height, width, 3)`` and a
single-channel map has shape ``(height, width)``, float64, values in [0, 1].
Pixel (col x, row y) lives at ``arr[y, x]`` and at flat index ``y * width + x``.
In continuous coordinates x grows rightward and y downward, and the center of
pixel (x, y) is at ``(x + 0.5, y + 0.5)``.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class RasterError(ValueError):
    """Raised for unreadable, unsupported, or malformed raster data."""


def as_image(arr) -> np.ndarray:
    """Validate and return an RGB image as a float64 ``(H, W, 3)`` array."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise RasterError(f"expected an (H, W, 3) image, got shape {img.shape}")
    _check_range(img)
    return img


def as_channel(arr) -> np.ndarray:
    """Validate and return a single-channel map as a float64 ``(H, W)`` array."""
    ch = np.asarray(arr, dtype=np.float64)
    if ch.ndim != 2:
        raise RasterError(f"expected an (H, W) channel map, got shape {ch.shape}")
    _check_range(ch)
    return ch


def _check_range(a: np.ndarray) -> None:
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise RasterError("zero-dimension image")
    if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
        raise RasterError("pixel values must lie in [0, 1]")


def pixel_centers(width: int, height: int) -> np.ndarray:
    """Continuous coordinates of all pixel centers, shape ``(H*W, 2)`` in flat order."""
    ys, xs = np.mgrid[0:height, 0:width]
    return np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5]).astype(np.float64)


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit RGB(A)/grayscale PNG into a float RGB image.

    Alpha channels are dropped with a warning.
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise RasterError(f"unsupported format {im.format!r}: {path}")
            im.load()
            if im.mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
            mode = im.mode
            data = np.array(im)
    except RasterError:
        raise
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise RasterError(f"unreadable file: {path}") from exc

    if mode in ("RGBA", "LA", "PA") or (data.ndim == 3 and data.shape[2] in (2, 4)):
        warnings.warn(f"discarding alpha channel of {path}", stacklevel=2)
        data = data[..., :-1]
    if data.dtype == np.uint8:
        maxval = 255.0
    elif data.dtype == np.uint16 or (data.dtype == np.int32 and mode.startswith("I")):
        maxval = 65535.0
    elif data.dtype == bool:
        maxval = 1.0
    else:
        raise RasterError(f"unsupported pixel type {data.dtype} ({mode}): {path}")

    img = data.astype(np.float64) / maxval
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.size == 0:
        raise RasterError(f"zero-dimension image: {path}")
    return as_image(img)


def _to_bytes(a: np.ndarray) -> np.ndarray:
    # round half up: floor(255 v + 0.5)
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def save_channel(channel, path) -> None:
    """Write a map as 8-bit grayscale PNG, storing ``round(255 v)``."""
    ch = as_channel(channel)
    _save(Image.fromarray(_to_bytes(ch)), path)


def save_rgb(image, path) -> None:
    """Write an RGB image as 8-bit PNG, per-channel ``round(255 v)``."""
    img = as_image(image)
    _save(Image.fromarray(_to_bytes(img)), path)


def _save(im: Image.Image, path) -> None:
    try:
        im.save(Path(path), format="PNG")
    except OSError as exc:
        raise RasterError(f"unwritable path: {path}") from exc


def load_channel(path) -> np.ndarray:
    """Read a PNG as a single-channel map (first channel of RGB input)."""
    return load_image(path)[:, :, 0]
