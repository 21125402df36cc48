"""Sequential coarse-to-fine adversarial training of the scale pyramid.

Each scale trains a fresh (or inherited) generator/discriminator pair with a
Wasserstein loss plus gradient penalty and a soft-masked reconstruction loss.
Fine scales mask the discrimination map and the discriminator's BN statistics
so nothing is learned from mask-contaminated patches; coarse scales train
unmasked against a naively inpainted real image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import sampler
from .bundle import PROGRESS_LOG, ModelBundle, ScaleModel
from .config import REC_DENOM_COMPLEMENT_SUM, EngineConfig
from .images import check_image, check_mask
from .morphology import compute_scale_split, soft_mask, valid_patch_map
from .naive import NoValidPixelsError, coarse_reals_from_naive, run_naive_inpaint
from .ops import derive_seed, to_tensor, upsample
from .nets import (
    CONV_RADIUS,
    NUM_BLOCKS,
    DiscriminatorNet,
    GeneratorNet,
    ScaleNetConfig,
    apply_generator,
    build_discriminator,
    build_generator,
    inherit_weights,
    propagate_validity,
    set_frozen_batch_stats,
)
from .pyramid import build_pyramid


class ConfigurationError(RuntimeError):
    """A scale was routed through the wrong masking regime."""


class TrainingCancelled(Exception):
    """Raised at an iteration boundary after a cancel request."""


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; the scale was aborted."""


@dataclass
class DiscMaskInfo:
    """Validity maps for a fine scale: per-conv-layer (for BN) and map-level."""

    layer_validities: list[torch.Tensor] | None  # None = BN masking disabled
    map_validity: torch.Tensor  # (H, W), 1 = discrimination position counts


def build_disc_mask_info(
    mask: np.ndarray, rf: int, mask_bn: bool = True, device="cpu", dtype=torch.float32
) -> DiscMaskInfo:
    layers = None
    if mask_bn:
        v0 = (1 - mask).astype(np.uint8)
        layers = [
            torch.from_numpy(v.astype(np.float32)).to(device=device, dtype=dtype)
            for v in propagate_validity(v0, NUM_BLOCKS, CONV_RADIUS)
        ]
    map_v = torch.from_numpy(valid_patch_map(mask, rf).astype(np.float32)).to(
        device=device, dtype=dtype
    )
    return DiscMaskInfo(layer_validities=layers, map_validity=map_v)


def masked_map_mean(disc_map: torch.Tensor, validity: torch.Tensor | None) -> torch.Tensor:
    """Mean of the discrimination map over valid positions (all, when None)."""
    if validity is None:
        return disc_map.mean()
    total = validity.sum()
    if total.item() == 0:
        raise ConfigurationError(
            "validity map is all-zero at a fine scale; this scale should be coarse"
        )
    return (disc_map * validity.reshape(1, 1, *validity.shape[-2:])).sum() / total


def gradient_penalty(
    disc: DiscriminatorNet, real: torch.Tensor, fake: torch.Tensor, rng: torch.Generator | None
) -> torch.Tensor:
    """(||grad_u mean(D(u))||_2 - 1)^2 at u = eps*real + (1-eps)*fake, eps ~ U(0, 1).

    Interpolates are full images: no masking inside the penalty.
    """
    eps = torch.rand(1, generator=rng, dtype=real.dtype, device=real.device)
    u = (eps * real + (1.0 - eps) * fake).detach().requires_grad_(True)
    score = disc(u).mean()
    if score.grad_fn is None:
        grad = torch.zeros_like(u)  # constant critic: zero input gradient
    else:
        (grad,) = torch.autograd.grad(
            score, u, create_graph=True, retain_graph=True, allow_unused=True
        )
        if grad is None:
            grad = torch.zeros_like(u)
    norm = grad.flatten().norm(2)
    return (norm - 1.0).square()


@dataclass
class LossBundle:
    d_loss: torch.Tensor
    g_loss_adv: torch.Tensor
    gp: torch.Tensor
    real_score: torch.Tensor
    fake_score: torch.Tensor


def wgan_gp_losses(
    disc: DiscriminatorNet,
    real: torch.Tensor,
    fake: torch.Tensor,
    mask_info: DiscMaskInfo | None = None,
    gp_weight: float = 0.1,
    rng: torch.Generator | None = None,
) -> LossBundle:
    """Wasserstein loss with gradient penalty.

    The real score is the discrimination-map mean over valid positions (with
    masked BN statistics when ``mask_info`` carries layer validities); the
    fake score is the plain map mean, since a generated image has no invalid
    pixels to ignore.
    """
    if mask_info is not None:
        real_map = disc(real, mask_info.layer_validities)
        real_score = masked_map_mean(real_map, mask_info.map_validity)
    else:
        real_score = disc(real).mean()
    fake_score = disc(fake).mean()
    gp = gradient_penalty(disc, real, fake, rng)
    d_loss = fake_score - real_score + gp_weight * gp
    return LossBundle(
        d_loss=d_loss,
        g_loss_adv=-fake_score,
        gp=gp,
        real_score=real_score,
        fake_score=fake_score,
    )


def reconstruction_loss(
    out: torch.Tensor, target: torch.Tensor, soft: torch.Tensor
) -> torch.Tensor:
    """MSE between the two images after weighting both by (1 - soft mask)."""
    w = (1.0 - soft).reshape(1, 1, *soft.shape[-2:])
    return (out * w - target * w).square().mean()


def fine_scale_weights(mask: np.ndarray, soft: np.ndarray, denominator: str = "masked_sum"):
    """Loss-weight compensation for fine scales.

    delta = pixels / valid pixels (rescales the gradient penalty);
    delta_rec = pixels / sum(soft mask), or pixels / sum(1 - soft mask) with
    the ``complement_sum`` switch. Degenerate denominators fall back to 1.
    """
    total = mask.size
    valid = int((mask == 0).sum())
    if valid == 0:
        raise ConfigurationError("fine-scale weights need at least one valid pixel")
    delta = total / valid
    s = float((1.0 - soft).sum()) if denominator == REC_DENOM_COMPLEMENT_SUM else float(soft.sum())
    delta_rec = total / s if s > 0 else 1.0
    return delta, delta_rec


def rmse_over(a: torch.Tensor, b: torch.Tensor, select: np.ndarray | None) -> float:
    """RMSE between two (1, 3, H, W) tensors over the selected (H, W) pixels."""
    if select is not None and select.sum() > 0:
        w = torch.from_numpy(select.astype(np.float32)).to(a.device).reshape(
            1, 1, *select.shape
        )
        num = ((a - b).square() * w).sum()
        return float(torch.sqrt(num / (w.sum() * a.shape[1])).item())
    return float(torch.sqrt((a - b).square().mean()).item())


def compute_noise_gain(
    up_rec: torch.Tensor | None, y_t: torch.Tensor, mask: np.ndarray, floor: float = 1e-4
) -> float:
    """Noise amplitude for a scale: RMSE of the upsampled coarser reconstruction
    against the scale's image over valid pixels; 1.0 at the coarsest scale."""
    if up_rec is None:
        return 1.0
    return max(rmse_over(up_rec, y_t, (mask == 0).astype(np.uint8)), floor)


@dataclass
class ProgressEvent:
    stage: str  # "naive" | "train"
    scale: int | None
    iteration: int
    total_iterations: int
    d_loss: float | None = None
    g_adv: float | None = None
    rec: float | None = None
    gp: float | None = None

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "scale": self.scale,
            "iteration": self.iteration,
            "total_iterations": self.total_iterations,
            "d_loss": self.d_loss,
            "g_adv": self.g_adv,
            "rec": self.rec,
            "gp": self.gp,
        }


PROGRESS_EVERY = 25


class PyramidTrainer:
    """Runs one full training job and produces a persisted ModelBundle."""

    def __init__(self, config: EngineConfig, on_progress=None, should_cancel=None):
        self.config = config
        self.on_progress = on_progress
        self.should_cancel = should_cancel
        self.device = config.device
        self._progress_path = None

    # -- helpers ------------------------------------------------------------

    def _emit(self, event: ProgressEvent):
        if self._progress_path is not None:
            with open(self._progress_path, "a") as fh:
                fh.write(json.dumps(event.to_dict()) + "\n")
        if self.on_progress is not None:
            self.on_progress(event)

    def _check_cancel(self):
        if self.should_cancel is not None and self.should_cancel():
            raise TrainingCancelled()

    def _rng(self, tag: str) -> torch.Generator:
        g = torch.Generator()
        g.manual_seed(derive_seed(self.config.seed, tag))
        return g

    # -- the pipeline ---------------------------------------------------------

    def train(self, image: np.ndarray, mask: np.ndarray, bundle_dir) -> ModelBundle:
        check_image(image)
        check_mask(mask, like=image)
        cfg = self.config

        # Invalid pixel content must never matter: zero it in model space.
        y = np.where(mask[..., None] == 1, 0.0, image).astype(np.float32)

        self._chain_cache: dict[int, ScaleModel] = {}
        bundle_root = Path(bundle_dir)
        bundle_root.mkdir(parents=True, exist_ok=True)
        self._progress_path = bundle_root / PROGRESS_LOG
        pyramid = build_pyramid(y, mask, cfg.pyramid)
        split = compute_scale_split(pyramid, cfg.receptive_field, cfg.valid_threshold)
        coarsest = len(pyramid) - 1

        naive_result = None
        reals: dict[int, np.ndarray] = {
            level.index: level.image for level in pyramid if not level.is_coarse
        }
        start_scale = coarsest
        if split.has_coarse:
            if cfg.use_coarse_scales:
                if (pyramid[split.split_index].mask == 1).all():
                    raise NoValidPixelsError(
                        "mask leaves no valid pixels at the naive-completion scale"
                    )
                self._emit(ProgressEvent("naive", split.split_index, 0, cfg.naive.iterations))
                naive_result = run_naive_inpaint(
                    pyramid[split.split_index].image,
                    pyramid[split.split_index].mask,
                    cfg.naive,
                    seed=derive_seed(cfg.seed, "naive"),
                    level_index=split.split_index,
                )
                reals.update(coarse_reals_from_naive(naive_result, pyramid, split))
            else:
                if split.split_index == 0:
                    raise ConfigurationError(
                        "cannot disable coarse scales: every scale is coarse for this mask"
                    )
                start_scale = split.split_index - 1

        bundle = ModelBundle(
            config=cfg,
            image=y,
            mask=mask.copy(),
            pyramid_dims=[level.dims for level in pyramid],
            coarse_flags=[level.is_coarse for level in pyramid],
            split_index=split.split_index,
            valid_fractions=list(split.valid_fraction_per_level),
            naive_image=None if naive_result is None else naive_result.inpainted_full,
            naive_level=None if naive_result is None else naive_result.level_index,
        )
        bundle.save_partial(bundle_dir)

        prev_gen: GeneratorNet | None = None
        prev_disc: DiscriminatorNet | None = None
        rec_prev: torch.Tensor | None = None  # reconstruction output of the coarser scale
        try:
            for train_order, n in enumerate(range(start_scale, -1, -1)):
                model, disc, rec_prev = self._train_scale(
                    n,
                    train_order,
                    pyramid,
                    reals,
                    prev_gen,
                    prev_disc,
                    rec_prev,
                    coarsest,
                    total_scales=len(pyramid),
                )
                prev_gen, prev_disc = model.generator, disc
                bundle.add_scale(model)
                bundle.save_scale(bundle_dir, model)
        except TrainingCancelled:
            bundle.save_partial(bundle_dir, resume_scale=len(bundle.scales))
            raise
        except TrainingDiverged:
            bundle.save_partial(bundle_dir, resume_scale=len(bundle.scales), diverged=True)
            raise

        bundle.mark_complete()
        rec_img = sampler.reconstruct(bundle)
        bundle.reconstruction_rmse_valid = float(
            rmse_over(to_tensor(rec_img), to_tensor(y), (mask == 0).astype(np.uint8))
        )
        bundle.save(bundle_dir)
        return bundle

    # -- one scale ------------------------------------------------------------

    def _train_scale(
        self,
        n: int,
        train_order: int,
        pyramid,
        reals: dict[int, np.ndarray],
        prev_gen: GeneratorNet | None,
        prev_disc: DiscriminatorNet | None,
        rec_prev: torch.Tensor | None,
        coarsest: int,
        total_scales: int,
    ):
        cfg = self.config
        sched = cfg.schedule
        level = pyramid[n]
        dims = level.dims
        is_coarse = level.is_coarse and cfg.use_coarse_scales
        rng = self._rng(f"scale-{n}")

        net_cfg = ScaleNetConfig.for_train_order(n, train_order)
        gen = build_generator(net_cfg, rng).to(self.device)
        disc = build_discriminator(net_cfg, rng).to(self.device)
        if net_cfg.inherit and prev_gen is not None:
            inherit_weights(prev_gen, gen)
            inherit_weights(prev_disc, disc)

        y_t = to_tensor(level.image, self.device)
        real_t = to_tensor(reals[n], self.device)
        soft = soft_mask(
            level.mask, n, coarsest, cfg.mask_sigma, cfg.soft_mask_zero_at_invalid
        )
        soft_t = torch.from_numpy(soft).to(self.device)

        mask_info = None
        gp_weight = sched.gp_weight
        rec_weight = sched.rec_weight
        if not is_coarse:
            mask_info = build_disc_mask_info(
                level.mask, cfg.receptive_field, cfg.mask_bn, self.device
            )
            delta, delta_rec = fine_scale_weights(
                level.mask, soft, cfg.rec_weight_denominator
            )
            gp_weight = delta * sched.gp_weight
            alpha = (
                sched.rec_weight_finest_third
                if n < math.ceil(total_scales / 3)
                else sched.rec_weight
            )
            rec_weight = delta_rec * alpha

        up_rec = None if rec_prev is None else upsample(rec_prev, dims)
        gain = compute_noise_gain(up_rec, y_t, level.mask)
        if rec_prev is None:
            z_rec = cfg.noise_std * gain * torch.randn(
                (1, 3, *dims), generator=rng
            ).to(self.device)
        else:
            z_rec = torch.zeros((1, 3, *dims), device=self.device)

        iters = sched.coarse_iters if is_coarse else sched.fine_iters
        lr = sched.coarse_lr if is_coarse else sched.fine_lr
        betas = (sched.adam_beta1, sched.adam_beta2)
        opt_g = torch.optim.Adam(gen.parameters(), lr=lr, betas=betas)
        opt_d = torch.optim.Adam(disc.parameters(), lr=lr, betas=betas)

        chain = self._frozen_chain(pyramid, n)

        decay_at = sched.coarse_lr_decay_at if is_coarse else sched.fine_lr_decay_at
        gen.train()
        disc.train()
        last = {}
        for it in range(iters):
            self._check_cancel()
            if decay_at is not None and it == decay_at:
                for opt in (opt_g, opt_d):
                    for group in opt.param_groups:
                        group["lr"] *= sched.lr_decay_gamma

            for _ in range(sched.d_steps):
                with torch.no_grad():
                    prev_fake = self._sample_prev(chain, rng)
                    prev_up = None if prev_fake is None else upsample(prev_fake, dims)
                    z = cfg.noise_std * gain * torch.randn((1, 3, *dims), generator=rng).to(
                        self.device
                    )
                    fake = apply_generator(gen, z, prev_up)
                opt_d.zero_grad()
                losses = wgan_gp_losses(disc, real_t, fake, mask_info, gp_weight, rng)
                if not torch.isfinite(losses.d_loss):
                    raise TrainingDiverged(f"discriminator loss diverged at scale {n}, iter {it}")
                losses.d_loss.backward()
                opt_d.step()

            for _ in range(sched.g_steps):
                with torch.no_grad():
                    prev_fake = self._sample_prev(chain, rng)
                    prev_up = None if prev_fake is None else upsample(prev_fake, dims)
                z = cfg.noise_std * gain * torch.randn((1, 3, *dims), generator=rng).to(
                    self.device
                )
                fake = apply_generator(gen, z, prev_up)
                adv = -disc(fake).mean()
                rec_out = apply_generator(gen, z_rec, up_rec)
                rec = reconstruction_loss(rec_out, y_t, soft_t)
                g_loss = adv + rec_weight * rec
                if not torch.isfinite(g_loss):
                    raise TrainingDiverged(f"generator loss diverged at scale {n}, iter {it}")
                opt_g.zero_grad()
                g_loss.backward()
                opt_g.step()

            last = {
                "d_loss": float(losses.d_loss.item()),
                "g_adv": float(adv.item()),
                "rec": float(rec.item()),
                "gp": float(losses.gp.item()),
            }
            if it % PROGRESS_EVERY == 0 or it == iters - 1:
                self._emit(ProgressEvent("train", n, it, iters, **last))

        # Freeze: parameters stop training and BN normalizes by input stats.
        gen.eval()
        set_frozen_batch_stats(gen, True)
        for p in gen.parameters():
            p.requires_grad_(False)
        with torch.no_grad():
            rec_final = apply_generator(gen, z_rec, up_rec)
        rec_rmse = rmse_over(rec_final, y_t, (level.mask == 0).astype(np.uint8))

        model = ScaleModel(
            scale_index=n,
            train_order=train_order,
            channels=net_cfg.channels,
            is_coarse=is_coarse,
            dims=dims,
            generator=gen,
            z_rec=z_rec.detach().cpu(),
            gain=float(gain),
            rec_rmse=float(rec_rmse),
        )
        self._chain_cache[n] = model
        return model, disc, rec_final

    def _frozen_chain(self, pyramid, n: int) -> list:
        """Already-trained ScaleModels coarser than ``n``, coarse to fine."""
        return [self._chain_cache[k] for k in sorted(self._chain_cache, reverse=True) if k > n]

    def _sample_prev(self, chain: list, rng: torch.Generator) -> torch.Tensor | None:
        """Fresh-noise fake from the frozen coarser scales (None at the base)."""
        x = None
        for model in chain:
            z = self.config.noise_std * model.gain * torch.randn(
                (1, 3, *model.dims), generator=rng
            ).to(self.device)
            prev = None if x is None else upsample(x, model.dims)
            x = apply_generator(model.generator, z, prev)
        return x


def train_full(
    image: np.ndarray,
    mask: np.ndarray,
    config: EngineConfig,
    bundle_dir,
    on_progress=None,
    should_cancel=None,
) -> ModelBundle:
    """End-to-end pipeline: pyramid, split, naive completion, per-scale training."""
    trainer = PyramidTrainer(config, on_progress=on_progress, should_cancel=should_cancel)
    return trainer.train(image, mask, bundle_dir)
