import json

import numpy as np
from PIL import Image

from conftest import make_desk_image, make_desk_mask, micro_config

from maskfill.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from maskfill.images import quantize_u8, save_mask


def write_fixture(tmp_path):
    img_path = tmp_path / "input.png"
    mask_path = tmp_path / "mask.png"
    Image.fromarray(quantize_u8(make_desk_image())).save(img_path)
    save_mask(make_desk_mask(), mask_path)
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(micro_config().to_dict()))
    return img_path, mask_path, cfg_path


def test_train_sample_report_round_trip(tmp_path, capsys):
    img, mask, cfg = write_fixture(tmp_path)
    bundle_dir = tmp_path / "bundle"

    rc = main(
        [
            "train",
            "--image", str(img),
            "--mask", str(mask),
            "--out", str(bundle_dir),
            "--config", str(cfg),
            "--seed", "4",
            "--json",
        ]
    )
    assert rc == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["config"]["seed"] == 4  # echoed config snapshot
    assert (bundle_dir / "manifest.json").exists()
    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    assert manifest["state"] == "complete"

    samples_dir = tmp_path / "samples"
    rc = main(
        [
            "sample",
            "--bundle", str(bundle_dir),
            "--out", str(samples_dir),
            "--count", "5",
            "--mode", "high",
            "--seed", "3",
            "--std-map",
            "--json",
        ]
    )
    assert rc == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert len(out["samples"]) == 5
    assert all(Image.open(p).size == (64, 48) for p in out["samples"])
    std = np.load(samples_dir / "std_map.npy")
    assert std.shape == (48, 64)

    report_path = tmp_path / "report.json"
    rc = main(
        ["report", "--mask", str(mask), "--out", str(report_path), "--json"]
        + out["samples"]
    )
    assert rc == EXIT_OK
    report = json.loads(report_path.read_text())
    assert report["num_pairs"] == 10  # C(5, 2)


def test_sample_determinism_across_invocations(tmp_path, capsys):
    img, mask, cfg = write_fixture(tmp_path)
    bundle_dir = tmp_path / "bundle"
    assert main(
        ["train", "--image", str(img), "--mask", str(mask), "--out", str(bundle_dir),
         "--config", str(cfg), "--seed", "4"]
    ) == EXIT_OK
    capsys.readouterr()
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    for out in (a_dir, b_dir):
        assert main(
            ["sample", "--bundle", str(bundle_dir), "--out", str(out),
             "--count", "2", "--mode", "normal", "--seed", "7"]
        ) == EXIT_OK
    capsys.readouterr()
    for name in sorted(p.name for p in a_dir.glob("*.png")):
        assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes()


def test_reconstruct_command(tmp_path, capsys):
    img, mask, cfg = write_fixture(tmp_path)
    bundle_dir = tmp_path / "bundle"
    main(["train", "--image", str(img), "--mask", str(mask), "--out", str(bundle_dir),
          "--config", str(cfg)])
    capsys.readouterr()
    out_png = tmp_path / "rec.png"
    assert main(["reconstruct", "--bundle", str(bundle_dir), "--out", str(out_png)]) == EXIT_OK
    assert out_png.exists()


def test_naive_preview(tmp_path, capsys):
    img, mask, cfg = write_fixture(tmp_path)
    out_png = tmp_path / "naive.png"
    # micro pyramid: use the fast preset's geometry but the split still has
    # coarse scales for the desk mask
    rc = main(["naive", "--image", str(img), "--mask", str(mask),
               "--out", str(out_png), "--fast", "--json"])
    assert rc == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["naive"] == str(out_png)
    assert out_png.exists()


def test_naive_preview_no_coarse_scales(tmp_path, capsys):
    img, mask, _ = write_fixture(tmp_path)
    empty = tmp_path / "empty_mask.png"
    save_mask(np.zeros((48, 64), np.uint8), empty)
    out_png = tmp_path / "naive.png"
    rc = main(["naive", "--image", str(img), "--mask", str(empty),
               "--out", str(out_png), "--fast", "--json"])
    assert rc == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["naive"] is None
    assert not out_png.exists()


def test_usage_error_exit_code():
    assert main(["train"]) == EXIT_USAGE  # missing required flags
    assert main(["no-such-command"]) == EXIT_USAGE


def test_io_error_exit_code(tmp_path):
    rc = main(
        ["train", "--image", str(tmp_path / "missing.png"),
         "--mask", str(tmp_path / "missing_mask.png"), "--out", str(tmp_path / "b")]
    )
    assert rc == EXIT_IO


def test_ablation_flags_flow_into_manifest(tmp_path, capsys):
    img, mask, cfg = write_fixture(tmp_path)
    bundle_dir = tmp_path / "bundle_ablate"
    rc = main(
        ["train", "--image", str(img), "--mask", str(mask), "--out", str(bundle_dir),
         "--config", str(cfg), "--disable-bn-masking", "--disable-coarse-scales"]
    )
    assert rc == EXIT_OK
    capsys.readouterr()
    manifest = json.loads((bundle_dir / "manifest.json").read_text())
    assert manifest["ablations"] == {"mask_bn": False, "use_coarse_scales": False}


def test_help_exits_zero():
    assert main(["--help"]) == EXIT_OK
