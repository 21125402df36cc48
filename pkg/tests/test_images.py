import numpy as np
import pytest
from PIL import Image

from maskfill.images import (
    ImageDecodeError,
    ValidationError,
    check_mask,
    load_image,
    load_mask,
    quantize_u8,
    save_image,
    save_mask,
)


def write_png(path, arr):
    Image.fromarray(arr).save(path, format="PNG")


def test_black_png_maps_to_minus_one(tmp_path):
    p = tmp_path / "black.png"
    write_png(p, np.zeros((8, 8, 3), np.uint8))
    img = load_image(p)
    assert img.shape == (8, 8, 3)
    assert (img == -1.0).all()


def test_white_png_maps_to_plus_one(tmp_path):
    p = tmp_path / "white.png"
    write_png(p, np.full((8, 8, 3), 255, np.uint8))
    assert (load_image(p) == 1.0).all()


def test_mid_gray_linear_map(tmp_path):
    p = tmp_path / "gray.png"
    write_png(p, np.full((4, 4, 3), 128, np.uint8))
    expected = 128 / 255 * 2 - 1  # ~0.00392
    assert np.allclose(load_image(p), expected, atol=1e-7)


def test_grayscale_replicated_to_three_channels(tmp_path):
    p = tmp_path / "gray1.png"
    Image.fromarray(np.full((5, 7), 100, np.uint8), mode="L").save(p)
    img = load_image(p)
    assert img.shape == (5, 7, 3)
    assert (img[..., 0] == img[..., 1]).all() and (img[..., 1] == img[..., 2]).all()


def test_unreadable_file_raises_decode_error(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"this is not a png")
    with pytest.raises(ImageDecodeError):
        load_image(p)


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")


def test_save_load_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    raw = rng.integers(0, 256, size=(16, 24, 3), dtype=np.uint8)
    p = tmp_path / "rt.png"
    write_png(p, raw)
    img = load_image(p)
    q = tmp_path / "rt2.png"
    save_image(img, q)
    assert (np.asarray(Image.open(q)) == raw).all()


def test_quantize_u8_inverts_loader_grid():
    ks = np.arange(256, dtype=np.float32)
    vals = (ks / 255.0) * 2.0 - 1.0
    img = np.stack([vals] * 3, axis=-1)[None]  # (1, 256, 3)
    assert (quantize_u8(img)[0, :, 0] == ks.astype(np.uint8)).all()


def test_load_mask_all_zero_and_all_one(tmp_path):
    p0 = tmp_path / "zero.png"
    write_png(p0, np.zeros((6, 6, 3), np.uint8))
    assert (load_mask(p0) == 0).all()
    p1 = tmp_path / "one.png"
    write_png(p1, np.full((6, 6, 3), 255, np.uint8))
    assert (load_mask(p1) == 1).all()


def test_load_mask_checkerboard_threshold():
    board = np.indices((8, 8)).sum(axis=0) % 2
    arr = (board * 255).astype(np.uint8)
    from PIL import Image as I

    import tempfile, os

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "cb.png")
        I.fromarray(arr, mode="L").save(p)
        mask = load_mask(p, threshold=0.5)
    assert (mask == board).all()


def test_load_mask_threshold_validated(tmp_path):
    p = tmp_path / "m.png"
    write_png(p, np.zeros((4, 4, 3), np.uint8))
    with pytest.raises(ValidationError):
        load_mask(p, threshold=0.0)


def test_mask_save_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    mask = (rng.random((9, 13)) > 0.5).astype(np.uint8)
    p = tmp_path / "m.png"
    save_mask(mask, p)
    assert (load_mask(p) == mask).all()


def test_check_mask_rejects_nonbinary_and_mismatch():
    with pytest.raises(ValidationError):
        check_mask(np.array([[0, 2]], np.uint8))
    img = np.zeros((4, 4, 3), np.float32)
    with pytest.raises(ValidationError):
        check_mask(np.zeros((3, 4), np.uint8), like=img)
