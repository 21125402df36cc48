"""Diversity and fidelity measurement.

The pixel-space diversity metric is brute-force checkable: mean squared
difference over masked pixels, averaged across all unordered sample pairs.
A perceptual metric is available through a pluggable embedder hook (any
callable image -> list of (C, H, W) feature arrays); distances aggregate
channel-normalized squared differences the way learned perceptual metrics do,
but no pretrained network ships with this package.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .images import check_image, check_mask

PerceptualEmbedderHook = Callable[[np.ndarray], Sequence[np.ndarray]]


@dataclass
class DiversityReport:
    mean_pairwise_pixel_mse_in_mask: float
    mean_pairwise_perceptual: float | None
    num_pairs: int
    per_pair_pixel: list[float]
    per_pair_perceptual: list[float] | None

    def to_dict(self) -> dict:
        return {
            "mean_pairwise_pixel_mse_in_mask": self.mean_pairwise_pixel_mse_in_mask,
            "mean_pairwise_perceptual": self.mean_pairwise_perceptual,
            "num_pairs": self.num_pairs,
            "per_pair_pixel": self.per_pair_pixel,
            "per_pair_perceptual": self.per_pair_perceptual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def masked_pixel_mse(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """MSE between two images restricted to masked pixels (all channels)."""
    sel = mask == 1
    if not sel.any():
        raise ValueError("mask selects no pixels")
    return float(np.mean((a[sel] - b[sel]) ** 2))


def perceptual_distance(
    feats_a: Sequence[np.ndarray], feats_b: Sequence[np.ndarray], eps: float = 1e-10
) -> float:
    """Channel-normalized squared-difference aggregation over feature stacks.

    Each (C, H, W) layer is unit-normalized along channels per position; the
    layer distance is the spatial mean of the squared difference summed over
    channels, and layers are summed.
    """
    if len(feats_a) != len(feats_b):
        raise ValueError("feature stacks have different depths")
    total = 0.0
    for fa, fb in zip(feats_a, feats_b):
        na = fa / (np.linalg.norm(fa, axis=0, keepdims=True) + eps)
        nb = fb / (np.linalg.norm(fb, axis=0, keepdims=True) + eps)
        total += float(((na - nb) ** 2).sum(axis=0).mean())
    return total


def _crop_to_mask(img: np.ndarray, mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return img[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]


def pairwise_diversity(
    samples: Sequence[np.ndarray],
    mask: np.ndarray,
    hook: PerceptualEmbedderHook | None = None,
    crop_to_mask: bool = False,
) -> DiversityReport:
    """Mean pairwise diversity over all unordered sample pairs.

    ``crop_to_mask`` restricts the perceptual hook's input to the mask's
    bounding box; the pixel metric is always restricted to masked pixels.
    """
    if len(samples) < 2:
        raise ValueError("need at least 2 samples to measure diversity")
    for s in samples:
        check_image(s)
        check_mask(mask, like=s)

    pairs = list(combinations(range(len(samples)), 2))
    per_pixel = [masked_pixel_mse(samples[i], samples[j], mask) for i, j in pairs]

    per_perc = None
    mean_perc = None
    if hook is not None:
        inputs = [
            _crop_to_mask(s, mask) if crop_to_mask and mask.any() else s for s in samples
        ]
        feats = [hook(s) for s in inputs]
        per_perc = [perceptual_distance(feats[i], feats[j]) for i, j in pairs]
        mean_perc = float(np.mean(per_perc))

    return DiversityReport(
        mean_pairwise_pixel_mse_in_mask=float(np.mean(per_pixel)),
        mean_pairwise_perceptual=mean_perc,
        num_pairs=len(pairs),
        per_pair_pixel=per_pixel,
        per_pair_perceptual=per_perc,
    )


def masked_rmse(a: np.ndarray, b: np.ndarray, region: np.ndarray) -> float:
    """RMSE over the pixels selected by ``region`` (1 = included)."""
    check_image(a)
    check_image(b)
    check_mask(region, like=a)
    sel = region == 1
    if not sel.any():
        raise ValueError("region selects no pixels")
    return float(np.sqrt(np.mean((a[sel] - b[sel]) ** 2)))
