"""Mask morphology and validity arithmetic.

Masks are uint8 {0, 1} with 1 = masked. Border conventions:

* ``erode`` treats everything outside the image as masked, so an all-one
  mask is a fixed point of erosion.
* ``dilate`` is the morphological dual: outside the image is unmasked.
* A patch position is valid iff its window contains no masked pixel; windows
  overhanging the border are not invalidated by the overhang.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .images import check_mask

SQUARE = "square"
DISC = "disc"


def structuring_element(radius: int, element: str) -> np.ndarray:
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if element == SQUARE:
        return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    if element == DISC:
        yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
        return (yy * yy + xx * xx) <= radius * radius
    raise ValueError(f"unknown structuring element: {element!r}")


def erode(mask: np.ndarray, radius: int, element: str = SQUARE) -> np.ndarray:
    """A pixel stays 1 iff every pixel under the element is 1 (outside counts as 1)."""
    check_mask(mask)
    if radius == 0:
        return mask.copy()
    out = ndimage.binary_erosion(
        mask.astype(bool), structure=structuring_element(radius, element), border_value=1
    )
    return out.astype(np.uint8)


def dilate(mask: np.ndarray, radius: int, element: str = SQUARE) -> np.ndarray:
    """Dual of erode: dilate(m, r) == 1 - erode(1 - m, r)."""
    check_mask(mask)
    if radius == 0:
        return mask.copy()
    out = ndimage.binary_dilation(
        mask.astype(bool), structure=structuring_element(radius, element), border_value=0
    )
    return out.astype(np.uint8)


def valid_patch_map(mask: np.ndarray, rf: int) -> np.ndarray:
    """Binary map: 1 where the rf x rf window centered there holds no masked pixel.

    Equivalent to the complement of dilating the mask by an rf x rf square,
    but computed through a sliding window maximum so the two routes can be
    cross-checked against each other.
    """
    check_mask(mask)
    if rf < 1 or rf % 2 == 0:
        raise ValueError(f"receptive field must be odd and >= 1, got {rf}")
    any_masked = ndimage.maximum_filter(mask, size=rf, mode="constant", cval=0)
    return (1 - any_masked).astype(np.uint8)


def valid_fraction(validity: np.ndarray) -> float:
    """Fraction of valid patch positions, in [0, 1]."""
    return float(np.mean(validity))


@dataclass(frozen=True)
class ScaleSplit:
    """Finest index at which too few patches are valid, plus per-level fractions.

    Levels >= ``split_index`` are coarse; levels < it are fine. If every level
    keeps enough valid patches, ``split_index`` is N + 1 (all levels fine).
    """

    split_index: int
    valid_fraction_per_level: list[float]

    @property
    def has_coarse(self) -> bool:
        return self.split_index < len(self.valid_fraction_per_level)


def compute_scale_split(pyramid, rf: int, threshold: float = 0.4) -> ScaleSplit:
    """Find the finest level whose valid-patch fraction drops below ``threshold``.

    Sets ``is_coarse`` on the pyramid levels as a side effect.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    fractions = [valid_fraction(valid_patch_map(level.mask, rf)) for level in pyramid]
    split = len(pyramid)
    for n, frac in enumerate(fractions):
        if frac < threshold:
            split = n
            break
    for level in pyramid:
        level.is_coarse = level.index >= split
    return ScaleSplit(split_index=split, valid_fraction_per_level=fractions)


def gaussian_blur(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at 3 sigma and renormalized.

    Replicate padding at the border, so constant inputs are fixed points.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return ndimage.gaussian_filter(
        arr.astype(np.float32), sigma=sigma, truncate=3.0, mode="nearest"
    )


def soft_mask(
    mask: np.ndarray, n: int, coarsest: int, sigma: float = 5.0, zero_at_invalid: bool = False
) -> np.ndarray:
    """Soft loss-weighting mask: dilate by a disc of radius min(N - n, 5), then blur.

    ``zero_at_invalid`` additionally forces the result to 0 inside the hole
    itself; left off by default since the soft mask weights the reconstruction
    loss through its complement.
    """
    check_mask(mask)
    d = dilate(mask, min(coarsest - n, 5), DISC)
    s = np.clip(gaussian_blur(d, sigma), 0.0, 1.0)
    if zero_at_invalid:
        s = np.where(mask == 1, 0.0, s).astype(np.float32)
    return s


def blend_mask(mask: np.ndarray, sigma: float = 5.0) -> np.ndarray:
    """Gaussian-blurred mask in [0, 1], used to fuse generated content into the input."""
    check_mask(mask)
    return np.clip(gaussian_blur(mask, sigma), 0.0, 1.0)
