"""The persisted, immutable sampling artifact.

A bundle directory holds a JSON manifest (written atomically: temp file then
rename), one weight archive per scale, the input image/mask as lossless 8-bit
PNGs, the naive completion preview, and the training progress log. Weight
archives are flat named-tensor maps keyed by the generator's state-dict names
(``blocks.<i>.conv.weight`` etc.) plus the frozen reconstruction noise.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import EngineConfig
from .images import load_image, load_mask, save_image, save_mask
from .nets import GeneratorNet, set_frozen_batch_stats
from .pyramid import resize_mask

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
PROGRESS_LOG = "progress.jsonl"


class BundleError(RuntimeError):
    """Missing, incomplete, or corrupt bundle directory."""


@dataclass
class ScaleModel:
    """One frozen scale: generator weights, reconstruction noise, noise gain."""

    scale_index: int
    train_order: int
    channels: int
    is_coarse: bool
    dims: tuple[int, int]
    generator: GeneratorNet
    z_rec: torch.Tensor
    gain: float
    rec_rmse: float

    def archive_name(self) -> str:
        return f"scale_{self.scale_index:03d}.pt"


@dataclass
class ModelBundle:
    config: EngineConfig
    image: np.ndarray  # masked input, holes zeroed, (H, W, 3) in [-1, 1]
    mask: np.ndarray  # (H, W) uint8, 1 = masked
    pyramid_dims: list[tuple[int, int]]
    coarse_flags: list[bool]
    split_index: int
    valid_fractions: list[float]
    naive_image: np.ndarray | None = None
    naive_level: int | None = None
    scales: list[ScaleModel] = field(default_factory=list)  # coarse -> fine
    state: str = "partial"
    resume_scale: int | None = None
    diverged: bool = False
    reconstruction_rmse_valid: float | None = None

    # -- structure ----------------------------------------------------------

    @property
    def coarsest(self) -> int:
        return len(self.pyramid_dims) - 1

    def add_scale(self, model: ScaleModel):
        self.scales.append(model)

    def mask_at(self, index: int) -> np.ndarray:
        """The binary mask at a pyramid scale (recomputed deterministically)."""
        if index == 0:
            return self.mask.copy()
        return resize_mask(
            self.mask, self.pyramid_dims[index], self.config.pyramid.mask_threshold
        )

    def mark_complete(self):
        self.state = "complete"
        self.resume_scale = None

    # -- persistence ----------------------------------------------------------

    def manifest_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "state": self.state,
            "resume_scale": self.resume_scale,
            "diverged": self.diverged,
            "config": self.config.to_dict(),
            "split_index": self.split_index,
            "valid_fractions": self.valid_fractions,
            "pyramid": [
                {"index": i, "height": h, "width": w, "is_coarse": c}
                for i, ((h, w), c) in enumerate(zip(self.pyramid_dims, self.coarse_flags))
            ],
            "naive_level": self.naive_level,
            "reconstruction_rmse_valid": self.reconstruction_rmse_valid,
            "ablations": {
                "mask_bn": self.config.mask_bn,
                "use_coarse_scales": self.config.use_coarse_scales,
            },
            "scales": [
                {
                    "scale_index": m.scale_index,
                    "train_order": m.train_order,
                    "channels": m.channels,
                    "is_coarse": m.is_coarse,
                    "height": m.dims[0],
                    "width": m.dims[1],
                    "gain": m.gain,
                    "rec_rmse": m.rec_rmse,
                    "archive": m.archive_name(),
                }
                for m in self.scales
            ],
            "files": {
                "image": "input.png",
                "mask": "mask.png",
                "naive": "naive.png" if self.naive_image is not None else None,
            },
        }

    def _write_manifest(self, root: Path):
        tmp = root / (MANIFEST + ".tmp")
        tmp.write_text(json.dumps(self.manifest_dict(), indent=2, sort_keys=True))
        os.replace(tmp, root / MANIFEST)

    def save_scale(self, bundle_dir, model: ScaleModel):
        root = Path(bundle_dir)
        root.mkdir(parents=True, exist_ok=True)
        payload = dict(model.generator.state_dict())
        payload["z_rec"] = model.z_rec
        torch.save(payload, root / model.archive_name())
        self._write_manifest(root)

    def save_partial(self, bundle_dir, resume_scale: int | None = None, diverged: bool = False):
        root = Path(bundle_dir)
        root.mkdir(parents=True, exist_ok=True)
        self.state = "partial"
        self.resume_scale = resume_scale
        self.diverged = diverged
        self._write_inputs(root)
        self._write_manifest(root)

    def save(self, bundle_dir):
        root = Path(bundle_dir)
        root.mkdir(parents=True, exist_ok=True)
        self._write_inputs(root)
        for m in self.scales:
            archive = root / m.archive_name()
            if not archive.exists():
                self.save_scale(bundle_dir, m)
        self._write_manifest(root)

    def _write_inputs(self, root: Path):
        save_image(self.image, root / "input.png")
        save_mask(self.mask, root / "mask.png")
        if self.naive_image is not None:
            save_image(self.naive_image, root / "naive.png")

    @classmethod
    def load(cls, bundle_dir, require_complete: bool = True) -> "ModelBundle":
        root = Path(bundle_dir)
        manifest_path = root / MANIFEST
        if not manifest_path.exists():
            raise BundleError(f"no manifest at {root}")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise BundleError(f"corrupt manifest at {root}: {exc}") from exc
        if manifest.get("format_version") != FORMAT_VERSION:
            raise BundleError(f"unsupported format version {manifest.get('format_version')}")
        if require_complete and manifest["state"] != "complete":
            raise BundleError(f"bundle at {root} is {manifest['state']}, not complete")

        config = EngineConfig.from_dict(manifest["config"])
        mask = load_mask(root / "mask.png")
        raw = load_image(root / "input.png")
        image = np.where(mask[..., None] == 1, 0.0, raw).astype(np.float32)
        naive_image = None
        if manifest["files"].get("naive"):
            naive_path = root / manifest["files"]["naive"]
            if naive_path.exists():
                naive_image = load_image(naive_path)

        bundle = cls(
            config=config,
            image=image,
            mask=mask,
            pyramid_dims=[(lv["height"], lv["width"]) for lv in manifest["pyramid"]],
            coarse_flags=[lv["is_coarse"] for lv in manifest["pyramid"]],
            split_index=manifest["split_index"],
            valid_fractions=manifest["valid_fractions"],
            naive_image=naive_image,
            naive_level=manifest["naive_level"],
        )
        bundle.state = manifest["state"]
        bundle.resume_scale = manifest.get("resume_scale")
        bundle.diverged = manifest.get("diverged", False)
        bundle.reconstruction_rmse_valid = manifest.get("reconstruction_rmse_valid")

        for entry in manifest["scales"]:
            archive = root / entry["archive"]
            if not archive.exists():
                raise BundleError(f"missing scale archive {archive}")
            payload = torch.load(archive, weights_only=True)
            z_rec = payload.pop("z_rec")
            gen = GeneratorNet(entry["channels"])
            gen.load_state_dict(payload)
            gen.eval()
            set_frozen_batch_stats(gen, True)
            for p in gen.parameters():
                p.requires_grad_(False)
            bundle.add_scale(
                ScaleModel(
                    scale_index=entry["scale_index"],
                    train_order=entry["train_order"],
                    channels=entry["channels"],
                    is_coarse=entry["is_coarse"],
                    dims=(entry["height"], entry["width"]),
                    generator=gen,
                    z_rec=z_rec,
                    gain=entry["gain"],
                    rec_rmse=entry["rec_rmse"],
                )
            )
        return bundle


def bundle_fingerprint(bundle_dir) -> str:
    """Content hash of a bundle's logical state.

    Covers the manifest (canonical JSON), every scale's tensors by sorted
    name, and the input/mask/naive PNG bytes. The progress log is diagnostic
    output and deliberately excluded.
    """
    root = Path(bundle_dir)
    manifest = json.loads((root / MANIFEST).read_text())
    h = hashlib.sha256()
    h.update(json.dumps(manifest, sort_keys=True).encode())
    for entry in manifest["scales"]:
        payload = torch.load(root / entry["archive"], weights_only=True)
        for name in sorted(payload):
            t = payload[name]
            h.update(name.encode())
            h.update(str(t.dtype).encode())
            h.update(np.ascontiguousarray(t.detach().cpu().numpy()).tobytes())
    for key in ("image", "mask", "naive"):
        rel = manifest["files"].get(key)
        if rel:
            h.update((root / rel).read_bytes())
    return h.hexdigest()
