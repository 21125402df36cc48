"""Command-line entry points: train, sample, reconstruct, naive preview,
diversity report, and the local job service.

Exit codes: 0 success, 1 usage/configuration error, 2 I/O error,
3 training failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_TRAINING = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maskfill", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    t = sub.add_parser("train", help="train a model bundle on one masked image")
    t.add_argument("--image", required=True)
    t.add_argument("--mask", required=True)
    t.add_argument("--out", required=True, help="bundle directory to create")
    t.add_argument("--fast", action="store_true", help="reduced desk-scale schedule")
    t.add_argument("--config", help="JSON file with a full engine config")
    t.add_argument("--device", default=None)
    t.add_argument("--disable-bn-masking", action="store_true")
    t.add_argument("--disable-coarse-scales", action="store_true")
    t.add_argument(
        "--rec-weight-denominator", choices=["masked_sum", "complement_sum"], default=None
    )
    t.add_argument("--naive-debug", help="also write the naive completion PNG here")
    add_common(t)

    s = sub.add_parser("sample", help="draw completions from a trained bundle")
    s.add_argument("--bundle", required=True)
    s.add_argument("--out", required=True, help="output directory for PNGs")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--mode", choices=["normal", "medium", "high"], default="normal")
    s.add_argument("--noise-multiplier", type=float, default=1.0)
    s.add_argument("--std-map", action="store_true", help="dump std_map.npy and .png")
    add_common(s)

    r = sub.add_parser("reconstruct", help="write the zero-diversity reconstruction")
    r.add_argument("--bundle", required=True)
    r.add_argument("--out", required=True, help="output PNG path")
    add_common(r)

    n = sub.add_parser("naive", help="preview the coarse-scale naive completion")
    n.add_argument("--image", required=True)
    n.add_argument("--mask", required=True)
    n.add_argument("--out", required=True, help="output PNG path")
    n.add_argument("--fast", action="store_true")
    add_common(n)

    d = sub.add_parser("report", help="pairwise diversity report over sample PNGs")
    d.add_argument("--mask", required=True)
    d.add_argument("--out", required=True, help="report JSON path")
    d.add_argument("samples", nargs="+", help="sample PNG paths")
    add_common(d)

    v = sub.add_parser("serve", help="run the local job service")
    v.add_argument("--store", default=os.environ.get("MASKFILL_STORE", "./maskfill_store"))
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8750)
    v.add_argument("--fast", action="store_true", help="default jobs to the fast preset")
    v.add_argument("--ui", default=None, help="directory with the built web UI to serve at /")
    add_common(v)

    return p


def _load_config(args):
    from .config import EngineConfig

    if getattr(args, "config", None):
        cfg = EngineConfig.from_dict(json.loads(Path(args.config).read_text()))
    elif getattr(args, "fast", False):
        cfg = EngineConfig.fast()
    else:
        cfg = EngineConfig()
    overrides = {"seed": args.seed}
    if getattr(args, "device", None):
        overrides["device"] = args.device
    if getattr(args, "disable_bn_masking", False):
        overrides["mask_bn"] = False
    if getattr(args, "disable_coarse_scales", False):
        overrides["use_coarse_scales"] = False
    if getattr(args, "rec_weight_denominator", None):
        overrides["rec_weight_denominator"] = args.rec_weight_denominator
    return cfg.with_overrides(**overrides)


def _emit(args, payload: dict):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for k, v in payload.items():
            print(f"{k}: {v}")


def cmd_train(args) -> int:
    from .images import load_image, load_mask
    from .trainer import train_full

    cfg = _load_config(args)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    bundle = train_full(image, mask, cfg, args.out)
    if args.naive_debug and bundle.naive_image is not None:
        from .images import save_image

        save_image(bundle.naive_image, args.naive_debug)
    _emit(
        args,
        {
            "bundle": str(args.out),
            "scales": len(bundle.scales),
            "split_index": bundle.split_index,
            "reconstruction_rmse_valid": bundle.reconstruction_rmse_valid,
            "config": cfg.to_dict(),
        },
    )
    return EXIT_OK


def cmd_sample(args) -> int:
    from .bundle import ModelBundle
    from .images import save_image
    from .sampler import SampleRequest, generate, mode_by_name

    bundle = ModelBundle.load(args.bundle)
    mode = mode_by_name(args.mode, args.noise_multiplier)
    result = generate(bundle, SampleRequest(seed=args.seed, mode=mode, count=args.count))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(result.images):
        path = out / f"sample_{args.seed}_{args.mode}_{i:03d}.png"
        save_image(img, path)
        paths.append(str(path))
    payload = {"samples": paths, "mode": args.mode, "seed": args.seed}
    if args.std_map:
        # numeric dump: a bare (H, W) float32 grid in .npy layout
        np.save(out / "std_map.npy", result.std_map)
        from PIL import Image

        scale = result.std_map.max() or 1.0
        Image.fromarray(
            np.round(result.std_map / scale * 255).astype(np.uint8), mode="L"
        ).save(out / "std_map.png")
        payload["std_map"] = str(out / "std_map.npy")
    _emit(args, payload)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from .bundle import ModelBundle
    from .images import save_image
    from .sampler import reconstruct

    bundle = ModelBundle.load(args.bundle)
    save_image(reconstruct(bundle), args.out)
    _emit(args, {"reconstruction": args.out, "rmse_valid": bundle.reconstruction_rmse_valid})
    return EXIT_OK


def cmd_naive(args) -> int:
    from .config import EngineConfig
    from .images import load_image, load_mask, save_image
    from .morphology import compute_scale_split
    from .naive import run_naive_inpaint
    from .ops import derive_seed
    from .pyramid import build_pyramid

    cfg = EngineConfig.fast(seed=args.seed) if args.fast else EngineConfig(seed=args.seed)
    image = load_image(args.image)
    mask = load_mask(args.mask)
    y = np.where(mask[..., None] == 1, 0.0, image).astype(np.float32)
    pyramid = build_pyramid(y, mask, cfg.pyramid)
    split = compute_scale_split(pyramid, cfg.receptive_field, cfg.valid_threshold)
    if not split.has_coarse:
        _emit(args, {"naive": None, "note": "no coarse scales; naive completion not needed"})
        return EXIT_OK
    level = pyramid[split.split_index]
    result = run_naive_inpaint(
        level.image, level.mask, cfg.naive, seed=derive_seed(cfg.seed, "naive"),
        level_index=split.split_index,
    )
    save_image(result.inpainted_full, args.out)
    _emit(args, {"naive": args.out, "level": split.split_index})
    return EXIT_OK


def cmd_report(args) -> int:
    from .images import load_image, load_mask
    from .metrics import pairwise_diversity

    mask = load_mask(args.mask)
    samples = [load_image(p) for p in args.samples]
    report = pairwise_diversity(samples, mask)
    Path(args.out).write_text(report.to_json())
    _emit(
        args,
        {
            "report": args.out,
            "num_pairs": report.num_pairs,
            "mean_pairwise_pixel_mse_in_mask": report.mean_pairwise_pixel_mse_in_mask,
        },
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .config import EngineConfig
    from .service import create_app

    default_cfg = EngineConfig.fast() if args.fast else EngineConfig()
    app = create_app(args.store, default_config=default_cfg, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "train": cmd_train,
    "sample": cmd_sample,
    "reconstruct": cmd_reconstruct,
    "naive": cmd_naive,
    "report": cmd_report,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    from .images import ImageDecodeError, ValidationError
    from .naive import NaiveDivergenceError
    from .trainer import ConfigurationError, TrainingDiverged

    try:
        return _COMMANDS[args.command](args)
    except (TrainingDiverged, NaiveDivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (FileNotFoundError, ImageDecodeError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
