"""Multi-scale image/mask pyramid construction.

Level 0 is the finest scale (the input itself); level N is the coarsest.
Dimensions follow the recurrence dims(n+1) = round(dims(n) / scale_factor)
until min(H, W) would drop below ``min_dimension``. Image content at every
level is resampled directly from level 0 (no compounding of filter blur).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .images import check_image, check_mask


@dataclass(frozen=True)
class PyramidSpec:
    """Per-level shrink ratio and stop criterion for the pyramid."""

    scale_factor: float = 4.0 / 3.0
    min_dimension: int = 25
    # A mask pixel survives downsampling iff its area average exceeds this;
    # biased low so downstream validity never trains on contaminated patches.
    mask_threshold: float = 0.3

    def __post_init__(self):
        if not 1.0 < self.scale_factor <= 2.0:
            raise ValueError(f"scale_factor must be in (1, 2], got {self.scale_factor}")
        if self.min_dimension < 16:
            raise ValueError(f"min_dimension must be >= 16, got {self.min_dimension}")

    def level_dims(self, height: int, width: int) -> list[tuple[int, int]]:
        """Dimension ladder from (height, width) down to the stop criterion."""
        dims = [(height, width)]
        while True:
            h, w = dims[-1]
            nh, nw = round(h / self.scale_factor), round(w / self.scale_factor)
            if min(nh, nw) < self.min_dimension:
                break
            dims.append((nh, nw))
        return dims


@dataclass
class PyramidLevel:
    """One scale of the pyramid: image, mask, and the coarse/fine flag."""

    index: int
    image: np.ndarray
    mask: np.ndarray
    is_coarse: bool = field(default=False)

    @property
    def dims(self) -> tuple[int, int]:
        return self.image.shape[0], self.image.shape[1]


def resize_image(img: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Anti-aliased bicubic resample of an (H, W, 3) image to (H', W')."""
    check_image(img)
    if (img.shape[0], img.shape[1]) == size:
        return img.astype(np.float32, copy=True)
    t = torch.from_numpy(np.ascontiguousarray(img.astype(np.float32))).permute(2, 0, 1)[None]
    out = F.interpolate(t, size=size, mode="bicubic", align_corners=False, antialias=True)
    return out[0].permute(1, 2, 0).contiguous().numpy()


def resize_mask(mask: np.ndarray, size: tuple[int, int], threshold: float = 0.3) -> np.ndarray:
    """Area-average a binary mask to (H', W'), then re-binarize at ``threshold``."""
    check_mask(mask)
    if mask.shape == size:
        return mask.copy()
    t = torch.from_numpy(mask.astype(np.float32))[None, None]
    avg = F.adaptive_avg_pool2d(t, size)
    return (avg[0, 0].numpy() > threshold).astype(np.uint8)


def build_pyramid(image: np.ndarray, mask: np.ndarray, spec: PyramidSpec) -> list[PyramidLevel]:
    """Construct the image/mask pyramid; level 0 equals the inputs exactly."""
    check_image(image)
    check_mask(mask, like=image)
    h, w = image.shape[0], image.shape[1]
    if min(h, w) < spec.min_dimension:
        warnings.warn(
            f"input {h}x{w} is smaller than min_dimension={spec.min_dimension}; "
            "building a single-level pyramid",
            stacklevel=2,
        )
        return [PyramidLevel(0, image.astype(np.float32, copy=True), mask.copy())]
    levels = []
    for n, dims in enumerate(spec.level_dims(h, w)):
        if n == 0:
            levels.append(PyramidLevel(0, image.astype(np.float32, copy=True), mask.copy()))
        else:
            levels.append(
                PyramidLevel(
                    n,
                    resize_image(image, dims),
                    resize_mask(mask, dims, spec.mask_threshold),
                )
            )
    return levels
