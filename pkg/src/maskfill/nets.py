"""Generator and discriminator nets: 3x3 conv blocks with mask-aware batch norm.

Both nets are five fully-convolutional blocks (receptive field 11x11, zero
padding preserves spatial dims). The generator's last block is conv + Tanh,
the discriminator's is a bare conv producing a per-position discrimination
map. Batch-norm statistics can be restricted to feature positions unaffected
by masked input pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .morphology import SQUARE, erode

LEAKY_SLOPE = 0.2
NUM_BLOCKS = 5
CONV_RADIUS = 1
RECEPTIVE_FIELD = 2 * NUM_BLOCKS * CONV_RADIUS + 1  # 11
INIT_STD = 0.02
BASE_CHANNELS = 32


class NoValidPositionsError(RuntimeError):
    """Masked BN got a validity map with zero valid positions.

    The caller should route this scale through the coarse (unmasked) path
    instead of training it with discriminator masking.
    """


class MaskedBatchNorm2d(nn.Module):
    """BatchNorm2d whose batch statistics can ignore mask-contaminated positions.

    With a validity map, training-mode mean/var are computed only over valid
    spatial positions; normalization is still applied everywhere and running
    stats are updated from the valid-only estimates. ``frozen_batch_stats``
    switches a frozen net to always normalize by current-input statistics
    without touching the running buffers (used when sampling).
    """

    def __init__(self, num_features: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.weight = nn.Parameter(torch.ones(num_features))
        self.bias = nn.Parameter(torch.zeros(num_features))
        self.register_buffer("running_mean", torch.zeros(num_features))
        self.register_buffer("running_var", torch.ones(num_features))
        self.frozen_batch_stats = False

    def forward(self, x: torch.Tensor, validity: torch.Tensor | None = None) -> torch.Tensor:
        use_batch_stats = self.training or self.frozen_batch_stats
        if use_batch_stats:
            if validity is None:
                count = x.numel() // x.shape[1]
                mean = x.mean(dim=(0, 2, 3))
                var = x.var(dim=(0, 2, 3), unbiased=False)
            else:
                v = validity.to(dtype=x.dtype, device=x.device).reshape(1, 1, *validity.shape[-2:])
                count = int(v.sum().item())
                if count == 0:
                    raise NoValidPositionsError(
                        "all feature positions are mask-contaminated; "
                        "this scale belongs on the coarse (unmasked) path"
                    )
                mean = (x * v).sum(dim=(0, 2, 3)) / count
                centered = x - mean.view(1, -1, 1, 1)
                var = (centered.square() * v).sum(dim=(0, 2, 3)) / count
            if self.training and not self.frozen_batch_stats:
                with torch.no_grad():
                    unbiased = var * (count / (count - 1)) if count > 1 else var
                    self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean)
                    self.running_var.mul_(1 - self.momentum).add_(self.momentum * unbiased)
        else:
            mean = self.running_mean
            var = self.running_var
        xhat = (x - mean.view(1, -1, 1, 1)) / torch.sqrt(var.view(1, -1, 1, 1) + self.eps)
        return xhat * self.weight.view(1, -1, 1, 1) + self.bias.view(1, -1, 1, 1)


class ConvBlock(nn.Module):
    """conv3x3 (stride 1, zero pad 1) -> optional masked BN -> activation."""

    def __init__(self, cin: int, cout: int, activation: str = "leaky", norm: bool = True):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, kernel_size=3, padding=1)
        self.bn = MaskedBatchNorm2d(cout) if norm else None
        if activation == "leaky":
            self.act = nn.LeakyReLU(LEAKY_SLOPE)
        elif activation == "tanh":
            self.act = nn.Tanh()
        elif activation == "none":
            self.act = None
        else:
            raise ValueError(f"unknown activation: {activation!r}")

    def forward(self, x: torch.Tensor, validity: torch.Tensor | None = None) -> torch.Tensor:
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x, validity)
        if self.act is not None:
            x = self.act(x)
        return x


@dataclass(frozen=True)
class ScaleNetConfig:
    """Width and init policy for one pyramid scale's nets.

    ``train_order`` is the number of scales already trained (coarsest first);
    the width doubles every 4 scales and a width change forces fresh init.
    """

    scale_index: int
    channels: int
    inherit: bool

    @staticmethod
    def channels_at(train_order: int, base: int = BASE_CHANNELS) -> int:
        return base * 2 ** (train_order // 4)

    @classmethod
    def for_train_order(cls, scale_index: int, train_order: int, base: int = BASE_CHANNELS):
        ch = cls.channels_at(train_order, base)
        fresh = train_order == 0 or ch != cls.channels_at(train_order - 1, base)
        return cls(scale_index=scale_index, channels=ch, inherit=not fresh)


class GeneratorNet(nn.Module):
    """Five-block residual body; the caller composes noise, upsampled fake and output."""

    def __init__(self, channels: int, use_norm: bool = True):
        super().__init__()
        c = channels
        self.blocks = nn.ModuleList(
            [
                ConvBlock(3, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, 3, "tanh", norm=False),
            ]
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return x


class DiscriminatorNet(nn.Module):
    """Five-block patch critic: (1, 3, H, W) -> (1, 1, H, W) discrimination map."""

    def __init__(self, channels: int, use_norm: bool = True):
        super().__init__()
        c = channels
        self.blocks = nn.ModuleList(
            [
                ConvBlock(3, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, c, "leaky", use_norm),
                ConvBlock(c, 1, "none", norm=False),
            ]
        )

    def forward(
        self, x: torch.Tensor, validities: list[torch.Tensor] | None = None
    ) -> torch.Tensor:
        for i, block in enumerate(self.blocks):
            v = validities[i] if validities is not None and block.bn is not None else None
            x = block(x, v)
        return x


def apply_generator(
    gen: GeneratorNet, noise: torch.Tensor, prev: torch.Tensor | None
) -> torch.Tensor:
    """Residual composition: prev + F(noise + prev); the coarsest scale is F(noise)."""
    if prev is None:
        return gen(noise)
    return prev + gen(noise + prev)


def init_weights(net: nn.Module, std: float = INIT_STD, rng: torch.Generator | None = None):
    """Fresh init: conv weights and biases ~ N(0, std); BN affine stays (1, 0)."""
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            m.weight.data.normal_(0.0, std, generator=rng)
            if m.bias is not None:
                m.bias.data.normal_(0.0, std, generator=rng)
    return net


def build_generator(cfg: ScaleNetConfig, rng: torch.Generator | None = None) -> GeneratorNet:
    return init_weights(GeneratorNet(cfg.channels), rng=rng)


def build_discriminator(cfg: ScaleNetConfig, rng: torch.Generator | None = None) -> DiscriminatorNet:
    return init_weights(DiscriminatorNet(cfg.channels), rng=rng)


def inherit_weights(prev: nn.Module, new: nn.Module) -> bool:
    """Copy all parameters/buffers verbatim when shapes line up.

    Returns False (leaving the fresh init in place) on any width mismatch;
    that is the expected outcome at width-change scales.
    """
    prev_state = prev.state_dict()
    new_state = new.state_dict()
    if set(prev_state) != set(new_state):
        return False
    for name, tensor in prev_state.items():
        if tensor.shape != new_state[name].shape:
            return False
    new.load_state_dict(prev_state)
    return True


def propagate_validity(v0: np.ndarray, num_layers: int = NUM_BLOCKS, conv_radius: int = CONV_RADIUS):
    """Per-layer feature validity: each 3x3 conv erodes validity by its radius.

    Border overhang never invalidates (zero padding supplies border context);
    only mask-induced invalidity spreads. Returns the validity after each of
    the ``num_layers`` conv layers.
    """
    out = []
    v = v0
    for _ in range(num_layers):
        v = erode(v, conv_radius, SQUARE)
        out.append(v)
    return out


def set_frozen_batch_stats(net: nn.Module, frozen: bool = True) -> nn.Module:
    """Make every BN layer normalize by current-input stats without buffer updates."""
    for m in net.modules():
        if isinstance(m, MaskedBatchNorm2d):
            m.frozen_batch_stats = frozen
    return net
