"""Small shared tensor helpers."""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn.functional as F


def derive_seed(master: int, tag: str) -> int:
    """Stable per-purpose sub-seed from a master seed."""
    digest = hashlib.sha256(f"{master}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def to_tensor(img: np.ndarray, device="cpu") -> torch.Tensor:
    """(H, W, 3) float image -> (1, 3, H, W) float32 tensor."""
    t = torch.from_numpy(np.ascontiguousarray(img.astype(np.float32)))
    return t.permute(2, 0, 1)[None].to(device)


def to_image(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) tensor -> (H, W, 3) float32 array."""
    return t.detach()[0].permute(1, 2, 0).cpu().numpy().astype(np.float32)


def upsample(t: torch.Tensor, dims: tuple[int, int]) -> torch.Tensor:
    return F.interpolate(t, size=dims, mode="bicubic", align_corners=False)
