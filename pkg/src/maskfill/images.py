"""Image and mask I/O plus array conventions used across the engine.

Conventions: images are float32 numpy arrays of shape (H, W, 3) with values
in [-1, 1]; binary masks are uint8 arrays of shape (H, W) with values in
{0, 1} where 1 marks a masked (missing) pixel.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class ImageDecodeError(Exception):
    """Raised when a file cannot be decoded as a raster image."""


class ValidationError(Exception):
    """Raised when an image/mask violates the engine's conventions."""


def check_image(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"expected (H, W, 3) array, got {getattr(img, 'shape', None)}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValidationError("zero-size image")
    if not np.isfinite(img).all():
        raise ValidationError("image contains NaN or infinite values")
    return img


def check_mask(mask: np.ndarray, like: np.ndarray | None = None) -> np.ndarray:
    if not isinstance(mask, np.ndarray) or mask.ndim != 2:
        raise ValidationError(f"expected (H, W) mask, got {getattr(mask, 'shape', None)}")
    vals = np.unique(mask)
    if not np.isin(vals, (0, 1)).all():
        raise ValidationError("mask is not strictly binary")
    if like is not None and mask.shape != like.shape[:2]:
        raise ValidationError(f"mask shape {mask.shape} does not match image {like.shape[:2]}")
    return mask


def load_image(path) -> np.ndarray:
    """Load a PNG/JPEG as a float32 (H, W, 3) array in [-1, 1].

    Grayscale inputs are replicated to 3 channels; alpha is dropped.
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    if arr.size == 0:
        raise ValidationError(f"zero-size image: {path}")
    return (arr / 255.0) * 2.0 - 1.0


def save_image(img: np.ndarray, path) -> None:
    """Write an image as 8-bit 3-channel PNG. Values are clipped to [-1, 1]."""
    check_image(img)
    Image.fromarray(quantize_u8(img)).save(path, format="PNG")


def quantize_u8(img: np.ndarray) -> np.ndarray:
    """Quantize a [-1, 1] image to uint8 exactly as the PNG writer does."""
    arr = np.clip((img + 1.0) * 0.5, 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8)


def load_mask(path, threshold: float = 0.5) -> np.ndarray:
    """Load a raster as a binary mask: a pixel is masked iff luminance > threshold.

    Luminance is the channel mean in [0, 1]; any raster where nonzero means
    masked therefore works with the default threshold.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must be in (0, 1), got {threshold}")
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    if arr.size == 0:
        raise ValidationError(f"zero-size mask: {path}")
    lum = arr.mean(axis=2) / 255.0
    return (lum > threshold).astype(np.uint8)


def save_mask(mask: np.ndarray, path) -> None:
    """Write a binary mask as an 8-bit PNG with masked pixels at 255."""
    check_mask(mask)
    Image.fromarray((mask * 255).astype(np.uint8), mode="L").save(path, format="PNG")
