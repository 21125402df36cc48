"""Color-consistent naive completion used as the coarse-scale real image.

A small U-Net is overfit to map a fixed noise tensor to the input image,
with two losses: MSE over the valid pixels, and an RGB nearest-neighbor
consistency term that pulls every inpainted pixel toward some valid color.
The result is stitched with the valid regions and downsampled to supply the
real image at every coarser scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import NaiveInpaintConfig
from .images import check_image, check_mask
from .pyramid import resize_image


class NoValidPixelsError(ValueError):
    """The mask covers the whole image; there is no valid color palette."""


class NaiveDivergenceError(RuntimeError):
    """Optimization hit NaN twice (once at the configured lr, once at lr/2)."""


@dataclass
class NaiveResult:
    inpainted_full: np.ndarray  # stitched: equals the input at valid pixels
    inpainted_raw: np.ndarray  # bare network output
    level_index: int


def unet_depth(height: int, width: int) -> int:
    """Depth grows with image size: clamp(floor(log2(min(H, W) / 8)), 2, 5)."""
    d = math.floor(math.log2(max(min(height, width), 1) / 8.0))
    return max(2, min(5, d))


def nn_color_loss(output: torch.Tensor, y: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean over masked pixels of the squared RGB distance to the nearest valid color.

    The nearest neighbor is found against the current output and detached, so
    gradients flow only through the output pixel, not the matched target.

    ``output``/``y`` are (H, W, 3) tensors, ``mask`` is (H, W) with 1 = masked.
    """
    masked = mask > 0
    valid = ~masked
    if not bool(valid.any()):
        raise NoValidPixelsError("nn_color_loss needs at least one valid pixel")
    if not bool(masked.any()):
        return output.sum() * 0.0
    pts = output[masked]  # (K, 3)
    palette = y[valid]  # (M, 3)
    with torch.no_grad():
        idx = torch.cdist(pts, palette).argmin(dim=1)
    targets = palette[idx].detach()
    return (pts - targets).square().sum(dim=1).mean()


class _DoubleConv(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(cin, cout, 3, padding=1),
            nn.BatchNorm2d(cout),
            nn.LeakyReLU(0.2),
            nn.Conv2d(cout, cout, 3, padding=1),
            nn.BatchNorm2d(cout),
            nn.LeakyReLU(0.2),
        )

    def forward(self, x):
        return self.body(x)


class TinyUNet(nn.Module):
    """Lightweight U-Net: noise channels in, tanh RGB out, depth per image size."""

    def __init__(self, in_channels: int, depth: int, base: int = 32):
        super().__init__()
        widths = [min(base * 2**i, 128) for i in range(depth + 1)]
        self.enc = nn.ModuleList()
        prev = in_channels
        for w in widths:
            self.enc.append(_DoubleConv(prev, w))
            prev = w
        self.dec = nn.ModuleList()
        for i in range(depth - 1, -1, -1):
            self.dec.append(_DoubleConv(widths[i + 1] + widths[i], widths[i]))
        self.head = nn.Conv2d(widths[0], 3, 1)

    def forward(self, x):
        skips = []
        for i, block in enumerate(self.enc):
            x = block(x)
            if i < len(self.enc) - 1:
                skips.append(x)
                x = F.max_pool2d(x, 2, ceil_mode=True)
        for block in self.dec:
            skip = skips.pop()
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = block(torch.cat([x, skip], dim=1))
        return torch.tanh(self.head(x))


def _optimize(
    y_t: torch.Tensor,
    mask_t: torch.Tensor,
    noise: torch.Tensor,
    cfg: NaiveInpaintConfig,
    lr: float,
    depth: int,
    seed: int,
) -> torch.Tensor | None:
    """One DIP run; returns the final output or None on divergence."""
    g = torch.Generator().manual_seed(seed)
    net = TinyUNet(cfg.noise_channels, depth)
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            m.weight.data.normal_(0.0, 0.02, generator=g)
            if m.bias is not None:
                m.bias.data.zero_()
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    valid_t = (1.0 - mask_t).unsqueeze(-1)
    has_hole = bool((mask_t > 0).any())
    net.train()
    for _ in range(cfg.iterations):
        opt.zero_grad()
        out = net(noise)[0].permute(1, 2, 0)  # (H, W, 3)
        loss = ((out - y_t).square() * valid_t).sum() / valid_t.sum().clamp_min(1.0) / 3.0
        if has_hole:
            loss = loss + cfg.nn_loss_weight * nn_color_loss(out, y_t, mask_t)
        if not torch.isfinite(loss):
            return None
        loss.backward()
        opt.step()
    with torch.no_grad():
        final = net(noise)[0].permute(1, 2, 0)
    if not torch.isfinite(final).all():
        return None
    return final


def run_naive_inpaint(
    y: np.ndarray, mask: np.ndarray, cfg: NaiveInpaintConfig, seed: int, level_index: int = 0
) -> NaiveResult:
    """Train the DIP U-Net on one pyramid level and stitch the completion.

    Deterministic for a given seed. Diverging runs are retried once at half
    the learning rate before giving up.
    """
    check_image(y)
    check_mask(mask, like=y)
    if (mask == 1).all():
        raise NoValidPixelsError("cannot naive-inpaint a fully masked image")
    h, w = mask.shape
    depth = unet_depth(h, w)
    g = torch.Generator().manual_seed(seed)
    noise = cfg.noise_std * torch.randn((1, cfg.noise_channels, h, w), generator=g)
    y_t = torch.from_numpy(y.astype(np.float32))
    mask_t = torch.from_numpy(mask.astype(np.float32))

    out = _optimize(y_t, mask_t, noise, cfg, cfg.learning_rate, depth, seed)
    if out is None:
        out = _optimize(y_t, mask_t, noise, cfg, cfg.learning_rate / 2.0, depth, seed)
    if out is None:
        raise NaiveDivergenceError("naive inpaint diverged at lr and lr/2")

    raw = out.numpy().astype(np.float32)
    full = np.where(mask[..., None] == 1, raw, y).astype(np.float32)
    return NaiveResult(inpainted_full=full, inpainted_raw=raw, level_index=level_index)


def coarse_reals_from_naive(result: NaiveResult, pyramid, split) -> dict[int, np.ndarray]:
    """Real images for the coarse scales: the stitched completion resampled to each."""
    reals: dict[int, np.ndarray] = {}
    for level in pyramid:
        if level.index < split.split_index:
            continue
        if level.index == result.level_index:
            reals[level.index] = result.inpainted_full.copy()
        else:
            reals[level.index] = resize_image(result.inpainted_full, level.dims)
    return reals
